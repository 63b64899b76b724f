use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_xyz_frames, Molecule, Vec3};
use crate::metrics;

const TEMPLATES: &str = include_str!("../../data/templates.xyz");

/// Half-width of the uniform per-coordinate jitter, Å.
pub const JITTER: f64 = 0.02;

/// An equilibrium-geometry template molecule.
#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    pub molecule: Molecule,
}

/// The shipped templates, each labelled with its functional-group class.
pub fn templates() -> Vec<Template> {
    parse_xyz_frames(TEMPLATES)
        .expect("shipped templates parse")
        .into_iter()
        .map(|(name, mut molecule)| {
            molecule.set_class_id(Some(metrics::label_molecule(&molecule)));
            Template { name, molecule }
        })
        .collect()
}

/// `count` jittered copies of the templates, cycling through them in order.
///
/// A pure function of `(seed, count)`.
pub fn synth_dataset(seed: u64, count: usize) -> Vec<Molecule> {
    let templates = templates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let base = &templates[i % templates.len()].molecule;
            let coords = base
                .coords()
                .iter()
                .map(|c| {
                    c + Vec3::new(
                        rng.random_range(-JITTER..=JITTER),
                        rng.random_range(-JITTER..=JITTER),
                        rng.random_range(-JITTER..=JITTER),
                    )
                })
                .collect();
            let mut mol = base.with_coords(coords).expect("jitter keeps coordinates finite");
            mol.set_class_id(Some(metrics::label_molecule(&mol)));
            mol
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::infer_bonds;
    use crate::metrics::atom_stability;
    use crate::molio::{write_xyz, ElementTable};

    #[test]
    fn deterministic_per_seed() {
        let dump = |v: Vec<Molecule>| v.iter().map(write_xyz).collect::<Vec<_>>().join("\n");
        assert_eq!(dump(synth_dataset(0, 5)), dump(synth_dataset(0, 5)));
        assert_ne!(dump(synth_dataset(0, 5)), dump(synth_dataset(1, 5)));
    }

    #[test]
    fn methane_template() {
        let t = templates();
        let methane = &t.iter().find(|t| t.name == "methane").unwrap().molecule;
        let mut types = methane.atom_types().to_vec();
        types.sort();
        assert_eq!(types, vec![1, 1, 1, 1, 6]);
    }

    #[test]
    fn jitter_is_bounded() {
        let t = templates();
        for (i, m) in synth_dataset(3, 21).iter().enumerate() {
            let base = &t[i % t.len()].molecule;
            for (a, b) in m.coords().iter().zip(base.coords()) {
                assert!((a - b).amax() <= JITTER);
            }
        }
    }

    #[test]
    fn every_synthetic_atom_is_stable() {
        let table = ElementTable::standard();
        for m in synth_dataset(11, 700) {
            let g = infer_bonds(&m, table);
            assert_eq!(atom_stability(&m, &g, table), 1.0, "{}", write_xyz(&m));
        }
    }
}
