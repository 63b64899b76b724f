mod common;

use common::{fuzz_molecules, rigid_copy};
use iar_core::canon::{canonical_pose, tokenize};
use iar_core::molio::templates;
use iar_core::{Molecule, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_same_tokens(a: &Molecule, b: &Molecule, tol: f64) {
    assert_eq!(a.atom_types(), b.atom_types());
    for (x, y) in a.coords().iter().zip(b.coords()) {
        assert!((x - y).amax() <= tol, "{x:?} vs {y:?}");
    }
}

#[test]
fn asymmetric_molecules_tokenize_identically_under_rigid_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for mol in fuzz_molecules(3, 8) {
        let base = tokenize(&mol).to_molecule(None);
        for _ in 0..25 {
            let (moved, _) = rigid_copy(&mol, &mut rng);
            assert_same_tokens(&tokenize(&moved).to_molecule(None), &base, 1e-6);
        }
    }
}

#[test]
fn tokenizing_twice_is_a_fixed_point() {
    for mol in fuzz_molecules(4, 6) {
        let once = tokenize(&mol).to_molecule(None);
        let twice = tokenize(&once).to_molecule(None);
        assert_same_tokens(&twice, &once, 1e-9);
        let seq = tokenize(&once);
        assert_eq!(seq.order, (0..once.len()).collect::<Vec<_>>());
    }
}

#[test]
fn symmetric_templates_are_flagged_but_still_tokenize() {
    for t in templates() {
        let seq = tokenize(&t.molecule);
        assert_eq!(seq.len(), t.molecule.len());
        let mut sorted = seq.order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..seq.len()).collect::<Vec<_>>());
        let (_, frame) = canonical_pose(&t.molecule);
        assert!((frame.rotation.determinant() - 1.0).abs() < 1e-9, "{}", t.name);
    }
    let co2 = templates().into_iter().find(|t| t.name == "co2").unwrap();
    assert!(tokenize(&co2.molecule).flags().anchor_fallback);
    let methane = templates().into_iter().find(|t| t.name == "methane").unwrap();
    assert!(tokenize(&methane.molecule).flags().degenerate);
}

#[test]
fn tokens_are_centred() {
    for mol in fuzz_molecules(5, 5) {
        let c: Vec3 = tokenize(&mol).coords().iter().sum::<Vec3>() / mol.len() as f64;
        assert!(c.norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_clouds_tokenize_identically_under_rigid_motion(
        seed in 0u64..1_000_000,
        pts in prop::collection::vec((1u8..=9, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 4..9),
    ) {
        let types: Vec<u8> = pts.iter().map(|p| [1, 6, 7, 8, 9][p.0 as usize % 5]).collect();
        let coords: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p.1, p.2, p.3)).collect();
        let mol = Molecule::new(types, coords).unwrap();
        let seq = tokenize(&mol);
        let min_gap = (0..mol.len())
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (mol.coords()[i] - mol.coords()[j]).norm())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(!seq.flags().any() && min_gap > 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (moved, _) = rigid_copy(&mol, &mut rng);
        let a = tokenize(&moved).to_molecule(None);
        let b = seq.to_molecule(None);
        prop_assert_eq!(a.atom_types(), b.atom_types());
        for (x, y) in a.coords().iter().zip(b.coords()) {
            prop_assert!((x - y).amax() <= 1e-6);
        }
    }
}
