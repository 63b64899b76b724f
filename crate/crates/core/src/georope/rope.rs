use super::GeoError;
use crate::molio::Vec3;

/// Rotary encoding of 3D positions over `n_freq` blocks of six dimensions.
///
/// Within block `t` the pairs (0,1), (2,3), (4,5) are rotated by `x·θ_t`,
/// `y·θ_t` and `z·θ_t` respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct Rope3d {
    freqs: Vec<f64>,
}

impl Rope3d {
    pub fn new(freqs: Vec<f64>) -> Self {
        Self { freqs }
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn width(&self) -> usize {
        6 * self.freqs.len()
    }

    /// (cos, sin) for each rotated pair at position `c`; length `width / 2`.
    pub fn angles(&self, c: &Vec3) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(3 * self.freqs.len());
        for &theta in &self.freqs {
            for axis in 0..3 {
                let (s, co) = (c[axis] * theta).sin_cos();
                out.push((co, s));
            }
        }
        out
    }

    /// Applies the rotation (or its transpose) given precomputed angles.
    pub fn rotate_with(angles: &[(f64, f64)], v: &mut [f64], transpose: bool) {
        debug_assert_eq!(2 * angles.len(), v.len());
        for (pair, &(cos, sin)) in v.chunks_exact_mut(2).zip(angles) {
            let sin = if transpose { -sin } else { sin };
            let (a, b) = (pair[0], pair[1]);
            pair[0] = a * cos - b * sin;
            pair[1] = a * sin + b * cos;
        }
    }

    pub fn apply(&self, v: &[f64], c: &Vec3) -> Result<Vec<f64>, GeoError> {
        if v.len() != self.width() {
            return Err(GeoError::Shape {
                expected: self.width(),
                found: v.len(),
            });
        }
        let mut out = v.to_vec();
        Self::rotate_with(&self.angles(c), &mut out, false);
        Ok(out)
    }
}

/// `R_c v` for the frequency ladder `freqs`.
pub fn rope3d_apply(v: &[f64], c: &Vec3, freqs: &[f64]) -> Result<Vec<f64>, GeoError> {
    Rope3d::new(freqs.to_vec()).apply(v, c)
}

/// `R_{rel} k`; with `rel = c_j - c_i` this is the relative form of the
/// query-key product: `<R_ci q, R_cj k> = <q, R_rel k>`.
pub fn rope3d_apply_rel(k: &[f64], rel: &Vec3, freqs: &[f64]) -> Result<Vec<f64>, GeoError> {
    rope3d_apply(k, rel, freqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn freqs() -> Vec<f64> {
        vec![1.0, 0.3, 0.05]
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rand_pos(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        )
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_position_is_identity() {
        let v: Vec<f64> = (0..18).map(|i| i as f64 - 4.5).collect();
        assert_eq!(rope3d_apply(&v, &Vec3::zeros(), &freqs()).unwrap(), v);
    }

    #[test]
    fn width_mismatch() {
        assert_eq!(
            rope3d_apply(&[0.0; 12], &Vec3::zeros(), &freqs()),
            Err(GeoError::Shape { expected: 18, found: 12 })
        );
    }

    #[test]
    fn explicit_single_block() {
        // one frequency θ = 1: pairs rotate by x, y, z radians
        let v = [1.0, 0.0, 0.0, 1.0, 2.0, 0.0];
        let c = Vec3::new(std::f64::consts::FRAC_PI_2, std::f64::consts::PI, 0.0);
        let out = rope3d_apply(&v, &c, &[1.0]).unwrap();
        let want = [0.0, 1.0, 0.0, -1.0, 2.0, 0.0];
        for (o, w) in out.iter().zip(want) {
            assert!((o - w).abs() < 1e-15);
        }
    }

    #[test]
    fn norm_preserving_and_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = rand_vec(&mut rng, 18);
            let (c1, c2) = (rand_pos(&mut rng), rand_pos(&mut rng));
            let r = rope3d_apply(&v, &c1, &freqs()).unwrap();
            assert!((dot(&r, &r).sqrt() - dot(&v, &v).sqrt()).abs() < 1e-12);
            let twice = rope3d_apply(&r, &c2, &freqs()).unwrap();
            let once = rope3d_apply(&v, &(c1 + c2), &freqs()).unwrap();
            for (a, b) in twice.iter().zip(&once) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn transpose_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rope = Rope3d::new(freqs());
        let v = rand_vec(&mut rng, 18);
        let angles = rope.angles(&rand_pos(&mut rng));
        let mut w = v.clone();
        Rope3d::rotate_with(&angles, &mut w, false);
        Rope3d::rotate_with(&angles, &mut w, true);
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn relative_position_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (q, k) = (rand_vec(&mut rng, 18), rand_vec(&mut rng, 18));
            let (ci, cj) = (rand_pos(&mut rng), rand_pos(&mut rng));
            let lhs = dot(
                &rope3d_apply(&q, &ci, &freqs()).unwrap(),
                &rope3d_apply(&k, &cj, &freqs()).unwrap(),
            );
            let rhs = dot(&q, &rope3d_apply_rel(&k, &(cj - ci), &freqs()).unwrap());
            assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
        }
    }
}
