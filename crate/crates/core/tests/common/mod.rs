#![allow(dead_code)]

use iar_core::armodel::{
    Example, Model, ModelConfig, OptimizerKind, SampleOptions, TrainConfig, TrainOutcome, Trainer,
};
use iar_core::canon::tokenize;
use iar_core::georope::{lattice_over, GeoRopeConfig};
use iar_core::molio::{random_rotation, synth_dataset, templates};
use iar_core::{Molecule, Vec3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 1 layer, d_type = 6, m = 2.
pub fn micro_model(seed: u64) -> Model {
    let geo = GeoRopeConfig::new(6, vec![Vec3::new(-1.0, 0.2, 0.1), Vec3::new(0.8, -0.3, 0.4)]);
    let mut cfg = ModelConfig::new(geo);
    cfg.n_layers = 1;
    cfg.d_ff = 5;
    cfg.denoiser_hidden = 4;
    cfg.denoiser_embed = 3;
    cfg.sigma_features = 2;
    cfg.sigma_data = 0.7;
    Model::new(cfg, seed).unwrap()
}

/// Four atoms with a class label, for the micro-model checks.
pub fn micro_example() -> Example {
    Example {
        atoms: vec![3, 1, 0, 0],
        coords: vec![
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(1.2, 0.4, -0.1),
            Vec3::new(-0.3, 0.9, 0.5),
            Vec3::new(0.2, -0.8, -0.6),
        ],
        class_id: Some(2),
    }
}

/// Template molecules pushed off their symmetric geometry by up to 0.15 Å
/// per coordinate; only those whose pose needs no fallback are kept.
pub fn fuzz_molecules(seed: u64, count: usize) -> Vec<Molecule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut pool = synth_dataset(seed, 10 * count).into_iter();
    while out.len() < count {
        let mol = pool.next().expect("enough asymmetric candidates");
        let coords = mol
            .coords()
            .iter()
            .map(|c| c + Vec3::from_fn(|_, _| rng.random_range(-0.15..=0.15)))
            .collect();
        let mol = mol.with_coords(coords).unwrap();
        if !tokenize(&mol).flags().any() {
            out.push(mol);
        }
    }
    out
}

/// A randomly permuted, rotated and translated copy, plus the permutation
/// (`copy[k] = mol[perm[k]]`).
pub fn rigid_copy(mol: &Molecule, rng: &mut impl Rng) -> (Molecule, Vec<usize>) {
    let rot = random_rotation(rng);
    let shift = Vec3::from_fn(|_, _| rng.random_range(-5.0..5.0));
    let mut perm: Vec<usize> = (0..mol.len()).collect();
    perm.shuffle(rng);
    (mol.permuted(&perm).transformed(&rot, &shift), perm)
}

/// Per-atom coordinate RMSD, or `None` when the type sequences differ.
pub fn rmsd(a: &Molecule, b: &Molecule) -> Option<f64> {
    if a.atom_types() != b.atom_types() {
        return None;
    }
    let ss: f64 = a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).norm_squared()).sum();
    Some((ss / a.len() as f64).sqrt())
}

pub fn train(cfg: ModelConfig, init_seed: u64, tc: TrainConfig, mols: &[Molecule]) -> TrainOutcome {
    let model = Model::new(cfg, init_seed).unwrap();
    let data = mols
        .iter()
        .map(|m| Example::from_molecule(m, model.vocab()).unwrap())
        .collect();
    Trainer::new(model, tc, data).unwrap().run().unwrap()
}

fn adam(steps: usize, batch_size: usize, learning_rate: f64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size,
        learning_rate,
        final_lr_fraction: 0.02,
        optimizer: OptimizerKind::Adam,
        grad_clip: 1.0,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Five synthetic molecules in canonical order, with the model and optimiser
/// settings of the overfit run.
pub fn overfit_task() -> (Vec<Molecule>, ModelConfig, TrainConfig) {
    let mols: Vec<Molecule> = synth_dataset(7, 5)
        .iter()
        .map(|m| tokenize(m).to_molecule(None))
        .collect();
    let coords: Vec<Vec3> = mols.iter().flat_map(|m| m.coords().to_vec()).collect();
    let mut cfg = ModelConfig::new(GeoRopeConfig::new(48, lattice_over(&coords, [3, 3, 2], 1.0)));
    cfg.d_ff = 128;
    cfg.denoiser_hidden = 128;
    (mols, cfg, adam(2000, 40, 6e-3))
}

/// Fraction of greedy samples that reproduce some training molecule's type
/// sequence with per-atom RMSD at most `tol`.
pub fn greedy_reproduction(model: &Model, mols: &[Molecule], n: u64, tol: f64) -> f64 {
    let hits = (0..n)
        .filter(|&seed| {
            let s = model
                .sample_molecule(&SampleOptions {
                    temperature: 0.0,
                    seed,
                    max_len: 16,
                    ..Default::default()
                })
                .unwrap()
                .molecule;
            mols.iter().filter_map(|m| rmsd(m, &s)).any(|r| r <= tol)
        })
        .count();
    hits as f64 / n as f64
}

/// Single-atom molecules: H at (1,0,0) and C at (-1,0,0).
pub fn point_mass_task() -> (Vec<Molecule>, ModelConfig, TrainConfig) {
    let mols = vec![
        Molecule::new(vec![1], vec![Vec3::new(1.0, 0.0, 0.0)]).unwrap(),
        Molecule::new(vec![6], vec![Vec3::new(-1.0, 0.0, 0.0)]).unwrap(),
    ];
    let anchors = lattice_over(&[Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)], [3, 2, 2], 1.0);
    let cfg = ModelConfig::new(GeoRopeConfig::new(12, anchors));
    (mols, cfg, adam(4000, 16, 1e-2))
}

/// Jittered ethanol (hydroxyl, class 1) and dimethylamine (secondary amine,
/// class 3), ten of each, labelled.
pub fn two_group_task() -> (Vec<Molecule>, ModelConfig, TrainConfig) {
    let names = ["ethanol", "dimethylamine"];
    let n_templates = templates().len();
    let picks: Vec<usize> = templates()
        .iter()
        .enumerate()
        .filter(|(_, t)| names.contains(&t.name.as_str()))
        .map(|(i, _)| i)
        .collect();
    let mols: Vec<Molecule> = synth_dataset(11, 10 * n_templates)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| picks.contains(&(i % n_templates)))
        .map(|(_, m)| tokenize(&m).to_molecule(m.class_id()))
        .collect();
    let coords: Vec<Vec3> = mols.iter().flat_map(|m| m.coords().to_vec()).collect();
    let mut cfg = ModelConfig::new(GeoRopeConfig::new(24, lattice_over(&coords, [3, 3, 2], 1.0)));
    cfg.guidance.p_drop = 0.2;
    (mols, cfg, adam(3000, 20, 3e-3))
}

pub fn conditional_samples(model: &Model, class_id: u32, scale: f64, n: u64) -> Vec<Molecule> {
    (0..n)
        .map(|seed| {
            model
                .sample_molecule(&SampleOptions {
                    class_id: Some(class_id),
                    guidance_scale: scale,
                    temperature: 1.0,
                    seed,
                    max_len: 16,
                })
                .unwrap()
                .molecule
        })
        .collect()
}
