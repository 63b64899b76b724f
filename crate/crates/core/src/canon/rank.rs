use std::cmp::Reverse;

use super::BondGraph;
use crate::molio::Molecule;

/// Rounding quantum for the coordinate tie-breaker, Å.
pub const TIE_COORD_QUANTUM: f64 = 1e-4;

/// Canonical atom ranks (1-based, per input atom) and how they were reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalRank {
    pub rank: Vec<usize>,
    /// Refinement rounds summed over the initial pass and every restart.
    pub refinement_rounds: usize,
    pub tie_breaks_applied: usize,
}

impl CanonicalRank {
    /// Input atom indices in rank order.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.rank.len()];
        for (atom, &r) in self.rank.iter().enumerate() {
            order[r - 1] = atom;
        }
        order
    }
}

fn dense_rank<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut out = vec![0; keys.len()];
    let mut class = 0;
    for w in 0..idx.len() {
        if w > 0 && keys[idx[w]] != keys[idx[w - 1]] {
            class += 1;
        }
        out[idx[w]] = class;
    }
    out
}

fn class_count(classes: &[usize]) -> usize {
    classes.iter().max().map_or(0, |m| m + 1)
}

/// Initial invariant per atom: heavier, higher-degree, more hydrogens and
/// ring atoms sort first.
fn initial_classes(graph: &BondGraph, types: &[u8]) -> Vec<usize> {
    let ring = graph.ring_membership();
    let keys: Vec<_> = (0..types.len())
        .map(|i| {
            let hydrogens = graph
                .neighbors(i)
                .iter()
                .filter(|(j, _)| types[*j] == 1)
                .count();
            (
                Reverse(types[i]),
                Reverse(graph.degree(i)),
                Reverse(hydrogens),
                Reverse(ring[i]),
            )
        })
        .collect();
    dense_rank(&keys)
}

fn neighbor_signature(graph: &BondGraph, classes: &[usize], i: usize) -> Vec<(usize, u8)> {
    let mut sig: Vec<_> = graph
        .neighbors(i)
        .iter()
        .map(|&(j, order)| (classes[j], order))
        .collect();
    sig.sort_unstable();
    sig
}

/// Refines until the partition stops splitting. The old class is the primary
/// sort key, so class order is preserved across rounds.
fn refine(graph: &BondGraph, classes: &mut Vec<usize>) -> usize {
    let mut rounds = 0;
    loop {
        rounds += 1;
        let keys: Vec<_> = (0..classes.len())
            .map(|i| (classes[i], neighbor_signature(graph, classes, i)))
            .collect();
        let next = dense_rank(&keys);
        let stable = class_count(&next) == class_count(classes);
        *classes = next;
        if stable {
            return rounds;
        }
    }
}

/// Stable refined classes before any tie-breaking. Depends on the graph and
/// element types only.
pub fn graph_invariant_classes(graph: &BondGraph, types: &[u8]) -> Vec<usize> {
    let mut classes = initial_classes(graph, types);
    refine(graph, &mut classes);
    classes
}

fn rounded(v: f64) -> i64 {
    (v / TIE_COORD_QUANTUM).round() as i64
}

/// Morgan-style canonical ranking with coordinate tie-breaking.
///
/// `mol` should already be in its canonical pose: ties between graph-symmetric
/// atoms are broken by their rounded posed coordinates.
pub fn canonical_rank(graph: &BondGraph, mol: &Molecule) -> CanonicalRank {
    let types = mol.atom_types();
    let n = types.len();
    let mut classes = initial_classes(graph, types);
    let mut refinement_rounds = refine(graph, &mut classes);
    let mut tie_breaks_applied = 0;
    while class_count(&classes) < n {
        let mut sizes = vec![0usize; n];
        for &c in &classes {
            sizes[c] += 1;
        }
        let tied = (0..n).find(|&c| sizes[c] > 1).expect("some class is shared");
        let chosen = (0..n)
            .filter(|&i| classes[i] == tied)
            .min_by_key(|&i| {
                let c = mol.coords()[i];
                (
                    classes[i],
                    neighbor_signature(graph, &classes, i),
                    [rounded(c.x), rounded(c.y), rounded(c.z)],
                    i,
                )
            })
            .expect("tied class is non-empty");
        let promoted: Vec<usize> = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| 2 * c + usize::from(i != chosen))
            .collect();
        classes = dense_rank(&promoted);
        refinement_rounds += refine(graph, &mut classes);
        tie_breaks_applied += 1;
    }
    CanonicalRank {
        rank: classes.into_iter().map(|c| c + 1).collect(),
        refinement_rounds,
        tie_breaks_applied,
    }
}
