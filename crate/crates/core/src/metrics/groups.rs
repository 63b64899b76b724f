use std::collections::HashMap;
use std::sync::OnceLock;

use super::MetricsError;
use crate::canon::BondGraph;
use crate::molio::Molecule;

const CLASS_PATTERNS: &str = include_str!("../../data/class_patterns.txt");

const CARBON: u8 = 6;
const HYDROGEN: u8 = 1;
const NITROGEN: u8 = 7;
const OXYGEN: u8 = 8;

/// Functional-group flags in lookup order: hydroxyl, ether, secondary amine,
/// heteroatom ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ClassPattern {
    pub hydroxyl: bool,
    pub ether: bool,
    pub secondary_amine: bool,
    pub heteroatom_ring: bool,
}

impl ClassPattern {
    pub fn flags(&self) -> [bool; 4] {
        [
            self.hydroxyl,
            self.ether,
            self.secondary_amine,
            self.heteroatom_ring,
        ]
    }

    pub fn from_flags(f: [bool; 4]) -> Self {
        Self {
            hydroxyl: f[0],
            ether: f[1],
            secondary_amine: f[2],
            heteroatom_ring: f[3],
        }
    }

    /// `T`/`F` string in flag order, e.g. `TFFF`.
    pub fn bitstring(&self) -> String {
        self.flags()
            .iter()
            .map(|&b| if b { 'T' } else { 'F' })
            .collect()
    }

    pub fn parse(s: &str) -> Option<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 4 {
            return None;
        }
        let mut f = [false; 4];
        for (slot, c) in f.iter_mut().zip(chars) {
            *slot = match c {
                'T' | '1' => true,
                'F' | '0' => false,
                _ => return None,
            };
        }
        Some(Self::from_flags(f))
    }
}

/// Bijective pattern to class-id table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLookup {
    version: u32,
    to_id: HashMap<ClassPattern, u32>,
    to_pattern: HashMap<u32, ClassPattern>,
}

impl ClassLookup {
    pub fn standard() -> &'static ClassLookup {
        static TABLE: OnceLock<ClassLookup> = OnceLock::new();
        TABLE.get_or_init(|| ClassLookup::parse(CLASS_PATTERNS).expect("shipped class table parses"))
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut version = None;
        let mut to_id = HashMap::new();
        let mut to_pattern = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            let err = |msg: &str| MetricsError::Table {
                line,
                msg: msg.to_string(),
            };
            if fields.len() != 2 {
                return Err(err("expected two fields"));
            }
            if fields[0] == "version" {
                version = Some(fields[1].parse().map_err(|_| err("bad version"))?);
                continue;
            }
            let pattern = ClassPattern::parse(fields[0]).ok_or_else(|| err("bad pattern"))?;
            let id: u32 = fields[1].parse().map_err(|_| err("bad class id"))?;
            if to_id.insert(pattern, id).is_some() {
                return Err(err("duplicate pattern"));
            }
            if to_pattern.insert(id, pattern).is_some() {
                return Err(err("duplicate class id"));
            }
        }
        Ok(Self {
            version: version.ok_or(MetricsError::Table {
                line: 0,
                msg: "missing version".into(),
            })?,
            to_id,
            to_pattern,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.to_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_id.is_empty()
    }

    pub fn class_id(&self, pattern: &ClassPattern) -> Option<u32> {
        self.to_id.get(pattern).copied()
    }

    pub fn pattern(&self, class_id: u32) -> Option<ClassPattern> {
        self.to_pattern.get(&class_id).copied()
    }

    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.to_pattern.keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}

fn neighbor_counts(mol: &Molecule, graph: &BondGraph, i: usize) -> (usize, usize, usize) {
    let types = mol.atom_types();
    let nb = graph.neighbors(i);
    let c = nb.iter().filter(|(j, _)| types[*j] == CARBON).count();
    let h = nb.iter().filter(|(j, _)| types[*j] == HYDROGEN).count();
    (c, h, nb.len())
}

/// True if some simple cycle of length 5 or 6 passes through `start`.
fn on_small_cycle(graph: &BondGraph, start: usize) -> bool {
    fn dfs(graph: &BondGraph, start: usize, v: usize, path: &mut Vec<usize>) -> bool {
        for &(w, _) in graph.neighbors(v) {
            if w == start && (5..=6).contains(&path.len()) {
                return true;
            }
            if path.len() < 6 && !path.contains(&w) {
                path.push(w);
                let found = dfs(graph, start, w, path);
                path.pop();
                if found {
                    return true;
                }
            }
        }
        false
    }
    dfs(graph, start, start, &mut vec![start])
}

/// Graph-pattern functional-group detection.
pub fn detect_functional_groups(mol: &Molecule, graph: &BondGraph) -> ClassPattern {
    let types = mol.atom_types();
    let ring = graph.ring_membership();
    let mut p = ClassPattern::default();
    for i in 0..types.len() {
        let (c, h, deg) = neighbor_counts(mol, graph, i);
        match types[i] {
            OXYGEN => {
                if deg == 2 && c == 1 && h == 1 {
                    p.hydroxyl = true;
                }
                if deg == 2 && c == 2 && graph.neighbors(i).iter().all(|&(_, o)| o == 1) {
                    p.ether = true;
                }
            }
            NITROGEN => {
                if deg == 3 && c == 2 && h == 1 {
                    p.secondary_amine = true;
                }
            }
            _ => {}
        }
        if matches!(types[i], OXYGEN | NITROGEN) && ring[i] && on_small_cycle(graph, i) {
            p.heteroatom_ring = true;
        }
    }
    p
}
