use crate::molio::{ElementTable, Molecule};

/// Bond graph inferred from geometry. Symmetric, no self-edges, orders 1..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondGraph {
    adjacency: Vec<Vec<(usize, u8)>>,
}

impl BondGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Adds or replaces the bond `a-b`. Panics on self-edges, out-of-range
    /// atoms or an order outside 1..=3.
    pub fn set_bond(&mut self, a: usize, b: usize, order: u8) {
        assert!(a != b, "self-edge");
        assert!((1..=3).contains(&order), "bond order {order}");
        for (x, y) in [(a, b), (b, a)] {
            let row = &mut self.adjacency[x];
            match row.iter_mut().find(|(j, _)| *j == y) {
                Some(slot) => slot.1 = order,
                None => {
                    row.push((y, order));
                    row.sort_unstable();
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Neighbours of `i` with bond orders, sorted by neighbour index.
    pub fn neighbors(&self, i: usize) -> &[(usize, u8)] {
        &self.adjacency[i]
    }

    pub fn order(&self, a: usize, b: usize) -> u8 {
        self.adjacency[a]
            .iter()
            .find(|(j, _)| *j == b)
            .map_or(0, |&(_, o)| o)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Sum of bond orders at `i`.
    pub fn valence(&self, i: usize) -> u32 {
        self.adjacency[i].iter().map(|&(_, o)| o as u32).sum()
    }

    /// Edges `(a, b, order)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, u8)> {
        let mut out = Vec::new();
        for (a, row) in self.adjacency.iter().enumerate() {
            out.extend(row.iter().filter(|(b, _)| *b > a).map(|&(b, o)| (a, b, o)));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adjacency[i] {
                if !std::mem::replace(&mut seen[j], true) {
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Whether each atom lies on a cycle: an atom is in a ring iff at least
    /// one of its edges is not a bridge.
    pub fn ring_membership(&self) -> Vec<bool> {
        let n = self.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut in_ring = vec![false; n];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative DFS: (vertex, parent, next neighbour index)
            let mut stack = vec![(root, usize::MAX, 0usize)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(top) = stack.last_mut() {
                let (v, parent, next) = *top;
                if let Some(&(w, _)) = self.adjacency[v].get(next) {
                    top.2 += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, v, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[v]);
                        // edge parent-v is a bridge iff low[v] > disc[parent]
                        if low[v] <= disc[parent] {
                            in_ring[v] = true;
                            in_ring[parent] = true;
                        }
                    }
                }
            }
        }
        in_ring
    }
}

/// Pairwise distance-threshold bond inference.
pub fn infer_bonds(mol: &Molecule, table: &ElementTable) -> BondGraph {
    let types = mol.atom_types();
    let coords = mol.coords();
    let mut graph = BondGraph::new(mol.len());
    for a in 0..mol.len() {
        for b in a + 1..mol.len() {
            let order = table.bond_order(types[a], types[b], (coords[a] - coords[b]).norm());
            if order > 0 {
                graph.set_bond(a, b, order);
            }
        }
    }
    graph
}
