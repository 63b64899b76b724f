//! Chemical-feasibility metrics and functional-group class labelling.

mod groups;

pub use groups::{detect_functional_groups, ClassLookup, ClassPattern};

pub use crate::canon::BondGraph;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::canon::{graph_invariant_classes, infer_bonds};
use crate::molio::{ElementTable, Molecule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty sample set")]
    Empty,
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("class table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

fn atom_is_stable(mol: &Molecule, graph: &BondGraph, table: &ElementTable, i: usize) -> bool {
    let valence = graph.valence(i);
    table
        .by_charge(mol.atom_types()[i])
        .is_some_and(|e| e.valences.iter().any(|&v| u32::from(v) == valence))
}

/// Number of atoms whose bond-order sum is an allowed valence.
pub fn stable_atom_count(mol: &Molecule, graph: &BondGraph, table: &ElementTable) -> usize {
    (0..mol.len())
        .filter(|&i| atom_is_stable(mol, graph, table, i))
        .count()
}

/// Fraction of stable atoms.
pub fn atom_stability(mol: &Molecule, graph: &BondGraph, table: &ElementTable) -> f64 {
    if mol.is_empty() {
        return 0.0;
    }
    stable_atom_count(mol, graph, table) as f64 / mol.len() as f64
}

pub fn is_molecule_stable(mol: &Molecule, graph: &BondGraph, table: &ElementTable) -> bool {
    stable_atom_count(mol, graph, table) == mol.len()
}

/// Fraction of molecules in which every atom is stable.
pub fn molecule_stability(mols: &[Molecule], graphs: &[BondGraph], table: &ElementTable) -> f64 {
    assert_eq!(mols.len(), graphs.len());
    if mols.is_empty() {
        return 0.0;
    }
    let stable = mols
        .iter()
        .zip(graphs)
        .filter(|(m, g)| is_molecule_stable(m, g, table))
        .count();
    stable as f64 / mols.len() as f64
}

/// Every atom has valence between 1 and its maximum, and the graph is connected.
pub fn validity(mol: &Molecule, graph: &BondGraph, table: &ElementTable) -> bool {
    let valences_ok = (0..mol.len()).all(|i| {
        let v = graph.valence(i);
        table
            .by_charge(mol.atom_types()[i])
            .is_some_and(|e| v >= 1 && v <= u32::from(e.max_valence()))
    });
    valences_ok && graph.is_connected()
}

/// Pose-free identity of a molecular graph: atoms and bonds expressed in
/// terms of refined graph-invariant classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GraphKey {
    atoms: Vec<(usize, u8)>,
    bonds: Vec<(usize, usize, u8)>,
}

pub fn graph_key(mol: &Molecule, graph: &BondGraph) -> GraphKey {
    let types = mol.atom_types();
    let classes = graph_invariant_classes(graph, types);
    let mut atoms: Vec<_> = (0..types.len()).map(|i| (classes[i], types[i])).collect();
    atoms.sort_unstable();
    let mut bonds: Vec<_> = graph
        .edges()
        .into_iter()
        .map(|(a, b, o)| {
            let (x, y) = (classes[a], classes[b]);
            (x.min(y), x.max(y), o)
        })
        .collect();
    bonds.sort_unstable();
    GraphKey { atoms, bonds }
}

/// Distinct graph keys over total; 0 for an empty set.
pub fn uniqueness(mols: &[Molecule], table: &ElementTable) -> f64 {
    if mols.is_empty() {
        return 0.0;
    }
    let keys: HashSet<GraphKey> = mols
        .iter()
        .map(|m| graph_key(m, &infer_bonds(m, table)))
        .collect();
    keys.len() as f64 / mols.len() as f64
}

/// Class id of the molecule's functional-group pattern under the shipped
/// tables.
pub fn label_molecule(mol: &Molecule) -> u32 {
    let graph = infer_bonds(mol, ElementTable::standard());
    let pattern = detect_functional_groups(mol, &graph);
    ClassLookup::standard()
        .class_id(&pattern)
        .expect("shipped lookup covers every pattern")
}

/// Fraction of samples whose detected pattern maps to `target_class`.
pub fn hit_rate(
    samples: &[Molecule],
    target_class: u32,
    table: &ElementTable,
    lookup: &ClassLookup,
) -> Result<f64, MetricsError> {
    if lookup.pattern(target_class).is_none() {
        return Err(MetricsError::UnknownClass(target_class));
    }
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = samples
        .iter()
        .filter(|m| {
            let g = infer_bonds(m, table);
            lookup.class_id(&detect_functional_groups(m, &g)) == Some(target_class)
        })
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub valid: usize,
    pub valid_unique: usize,
    pub stable_atoms: usize,
    pub total_atoms: usize,
    pub stable_molecules: usize,
    pub validity: f64,
    /// Distinct valid graphs over valid samples.
    pub uniqueness: f64,
    /// Distinct valid graphs over all samples.
    pub validity_and_uniqueness: f64,
    /// Pooled over all atoms of all samples.
    pub atom_stability: f64,
    pub molecule_stability: f64,
    pub target_class: Option<u32>,
    pub hit_rate: Option<f64>,
}

impl EvalReport {
    /// Plain-text table, one metric per line.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("samples".to_string(), self.samples.to_string()),
            ("validity".into(), format!("{:.4}", self.validity)),
            ("uniqueness".into(), format!("{:.4}", self.uniqueness)),
            ("valid_and_unique".into(), format!("{:.4}", self.validity_and_uniqueness)),
            ("atom_stability".into(), format!("{:.4}", self.atom_stability)),
            ("molecule_stability".into(), format!("{:.4}", self.molecule_stability)),
        ];
        if let (Some(c), Some(h)) = (self.target_class, self.hit_rate) {
            rows.push((format!("hit_rate[class {c}]"), format!("{h:.4}")));
        }
        rows.iter()
            .map(|(k, v)| format!("{k:<20} {v}\n"))
            .collect()
    }
}

struct SampleStats {
    valid: bool,
    stable_atoms: usize,
    atoms: usize,
    key: Option<GraphKey>,
    class_id: Option<u32>,
}

/// All metrics over `samples` with the shipped tables.
pub fn evaluate(samples: &[Molecule], target_class: Option<u32>) -> Result<EvalReport, MetricsError> {
    evaluate_with(samples, target_class, ElementTable::standard(), ClassLookup::standard())
}

pub fn evaluate_with(
    samples: &[Molecule],
    target_class: Option<u32>,
    table: &ElementTable,
    lookup: &ClassLookup,
) -> Result<EvalReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(c) = target_class {
        if lookup.pattern(c).is_none() {
            return Err(MetricsError::UnknownClass(c));
        }
    }
    let stats: Vec<SampleStats> = samples
        .par_iter()
        .map(|m| {
            let g = infer_bonds(m, table);
            let valid = validity(m, &g, table);
            SampleStats {
                valid,
                stable_atoms: stable_atom_count(m, &g, table),
                atoms: m.len(),
                key: valid.then(|| graph_key(m, &g)),
                class_id: lookup.class_id(&detect_functional_groups(m, &g)),
            }
        })
        .collect();
    let n = samples.len();
    let valid = stats.iter().filter(|s| s.valid).count();
    let distinct: HashSet<&GraphKey> = stats.iter().filter_map(|s| s.key.as_ref()).collect();
    let stable_atoms = stats.iter().map(|s| s.stable_atoms).sum();
    let total_atoms = stats.iter().map(|s| s.atoms).sum();
    let stable_molecules = stats.iter().filter(|s| s.stable_atoms == s.atoms).count();
    let hits = target_class.map(|c| stats.iter().filter(|s| s.class_id == Some(c)).count());
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(EvalReport {
        samples: n,
        valid,
        valid_unique: distinct.len(),
        stable_atoms,
        total_atoms,
        stable_molecules,
        validity: frac(valid, n),
        uniqueness: frac(distinct.len(), valid),
        validity_and_uniqueness: frac(distinct.len(), n),
        atom_stability: frac(stable_atoms, total_atoms),
        molecule_stability: frac(stable_molecules, n),
        target_class,
        hit_rate: hits.map(|h| frac(h, n)),
    })
}
