use iar_core::georope::{
    attention_score, causal_attention, lattice_anchors, nested_order, rbf, GeoRopeConfig,
    NystromBasis, Rope3d, TokenLatent,
};
use iar_core::Vec3;
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-6.0f64..6.0, -6.0f64..6.0, -6.0f64..6.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

#[test]
fn four_anchor_basis_is_exact_on_its_anchors() {
    let anchors = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.1, 0.0, 0.2),
        Vec3::new(-0.4, 0.9, 0.0),
        Vec3::new(0.3, -0.2, 1.3),
    ];
    let basis = NystromBasis::new(anchors.clone(), 1.0, 0.0).unwrap();
    for a in &anchors {
        for b in &anchors {
            let approx = dot(&basis.encode(a), &basis.encode(b));
            assert!((approx - rbf(a, b, 1.0)).abs() <= 1e-10);
        }
    }
}

#[test]
fn nested_prefixes_never_get_worse_on_a_fixed_pair_set() {
    let grid = nested_order(&lattice_anchors(&Vec3::repeat(-4.0), &Vec3::repeat(4.0), [4, 4, 2], 0.0));
    let pairs: Vec<(Vec3, Vec3)> = (0..300)
        .map(|i| {
            let t = i as f64;
            (
                Vec3::new((t * 0.37).sin(), (t * 0.11).cos(), (t * 0.23).sin()) * 3.9,
                Vec3::new((t * 0.19).cos(), (t * 0.29).sin(), (t * 0.07).cos()) * 3.9,
            )
        })
        .collect();
    let err = |m: usize| {
        let b = NystromBasis::new(grid[..m].to_vec(), 1.0, 0.0).unwrap();
        pairs
            .iter()
            .map(|(x, y)| (dot(&b.encode(x), &b.encode(y)) - rbf(x, y, 1.0)).abs())
            .sum::<f64>()
    };
    let errs: Vec<f64> = [4, 8, 16, 32].iter().map(|&m| err(m)).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nystrom_products_are_symmetric(a in vec3(), b in vec3()) {
        let anchors = lattice_anchors(&Vec3::repeat(-3.0), &Vec3::repeat(3.0), [3, 3, 2], 0.5);
        let basis = NystromBasis::new(anchors, 1.0, 1e-8).unwrap();
        let (za, zb) = (basis.encode(&a), basis.encode(&b));
        prop_assert!((dot(&za, &zb) - dot(&zb, &za)).abs() <= 1e-12);
    }

    #[test]
    fn rope_scores_depend_only_on_displacement(
        ci in vec3(), cj in vec3(), shift in vec3(), seed in 0u64..1000,
    ) {
        let rope = GeoRopeConfig::new(12, vec![Vec3::zeros()]).rope();
        let q: Vec<f64> = (0..12).map(|i| ((seed + i) as f64 * 0.7).sin()).collect();
        let k: Vec<f64> = (0..12).map(|i| ((seed + 3 * i) as f64 * 0.3).cos()).collect();
        let score = |a: &Vec3, b: &Vec3| dot(&rope.apply(&q, a).unwrap(), &rope.apply(&k, b).unwrap());
        prop_assert!((score(&ci, &cj) - score(&(ci + shift), &(cj + shift))).abs() <= 1e-9);
    }

    #[test]
    fn rope_preserves_norms(c in vec3()) {
        let rope = Rope3d::new(vec![1.0, 0.1]);
        let v: Vec<f64> = (0..12).map(|i| i as f64 - 5.5).collect();
        let r = rope.apply(&v, &c).unwrap();
        prop_assert!((dot(&r, &r) - dot(&v, &v)).abs() <= 1e-9);
    }
}

#[test]
fn attention_rows_are_causal_distributions() {
    let cfg = GeoRopeConfig::new(6, lattice_anchors(&Vec3::repeat(-1.0), &Vec3::repeat(1.0), [2, 2, 1], 0.0));
    let rope = cfg.rope();
    let coords = [Vec3::zeros(), Vec3::new(0.9, 0.1, 0.0), Vec3::new(-0.5, 0.7, 0.3)];
    let latent = |i: usize, f: fn(f64) -> f64| {
        let z: Vec<f64> = (0..10).map(|j| f((i * 10 + j) as f64)).collect();
        TokenLatent::new(z[..6].to_vec(), z[6..].to_vec())
    };
    let q: Vec<TokenLatent> = (0..3).map(|i| latent(i, f64::sin)).collect();
    let k: Vec<TokenLatent> = (0..3).map(|i| latent(i, f64::cos)).collect();
    let v = q.clone();
    let out = causal_attention(&q, &k, &v, &coords, &rope, cfg.score_scale()).unwrap();
    for (i, row) in out.weights.iter().enumerate() {
        assert_eq!(row.len(), i + 1);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let s = attention_score(&q[2], &k[0], &coords[2], &coords[0], &rope, cfg.score_scale()).unwrap();
    assert!((s.total - (s.rope + s.nystrom)).abs() < 1e-12);
    assert!((s.scaled - s.total * cfg.score_scale()).abs() < 1e-12);
}
