use super::{GeoError, GeoRopeConfig};
use crate::molio::Vec3;

/// Gaussian kernel `exp(-|a - b|^2 / (2 sigma^2))`.
pub fn rbf(a: &Vec3, b: &Vec3, sigma: f64) -> f64 {
    (-(a - b).norm_squared() / (2.0 * sigma * sigma)).exp()
}

/// Lower Cholesky factor of a symmetric `m x m` row-major matrix.
pub fn cholesky_lower(a: &[f64], m: usize) -> Result<Vec<f64>, GeoError> {
    assert_eq!(a.len(), m * m);
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let partial: f64 = (0..j).map(|k| l[i * m + k] * l[j * m + k]).sum();
            if i == j {
                let d = a[i * m + i] - partial;
                if d <= 0.0 || !d.is_finite() {
                    return Err(GeoError::NotPositiveDefinite(i));
                }
                l[i * m + i] = d.sqrt();
            } else {
                l[i * m + j] = (a[i * m + j] - partial) / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// Cholesky factor of the anchor kernel matrix; encodes positions as
/// `L^-1 k(c)` so that inner products approximate the RBF kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromBasis {
    anchors: Vec<Vec3>,
    sigma: f64,
    jitter: f64,
    /// Row-major lower-triangular factor of `A + jitter I`.
    chol: Vec<f64>,
}

impl NystromBasis {
    pub fn new(anchors: Vec<Vec3>, sigma: f64, jitter: f64) -> Result<Self, GeoError> {
        let m = anchors.len();
        if m == 0 {
            return Err(GeoError::NoAnchors);
        }
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                a[i * m + j] = rbf(&anchors[i], &anchors[j], sigma);
            }
            a[i * m + i] += jitter;
        }
        let chol = cholesky_lower(&a, m)?;
        Ok(Self {
            anchors,
            sigma,
            jitter,
            chol,
        })
    }

    pub fn from_config(cfg: &GeoRopeConfig) -> Result<Self, GeoError> {
        cfg.validate()?;
        Self::new(cfg.anchors.clone(), cfg.rbf_sigma, cfg.chol_jitter)
    }

    pub fn m(&self) -> usize {
        self.anchors.len()
    }

    pub fn anchors(&self) -> &[Vec3] {
        &self.anchors
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    /// Kernel values between `c` and every anchor.
    pub fn kernel_vector(&self, c: &Vec3) -> Vec<f64> {
        self.anchors.iter().map(|a| rbf(c, a, self.sigma)).collect()
    }

    /// Forward substitution `L^-1 k(c)`.
    pub fn encode(&self, c: &Vec3) -> Vec<f64> {
        let m = self.m();
        let k = self.kernel_vector(c);
        let mut z = vec![0.0; m];
        for i in 0..m {
            let partial: f64 = (0..i).map(|j| self.chol[i * m + j] * z[j]).sum();
            z[i] = (k[i] - partial) / self.chol[i * m + i];
        }
        z
    }
}

/// Regular lattice of `shape[0] x shape[1] x shape[2]` points over the box
/// `[min - pad, max + pad]`; a single-point axis sits at the box centre.
/// Points are emitted x-major.
pub fn lattice_anchors(min: &Vec3, max: &Vec3, shape: [usize; 3], pad: f64) -> Vec<Vec3> {
    let axis = |k: usize| -> Vec<f64> {
        let (lo, hi) = (min[k] - pad, max[k] + pad);
        match shape[k] {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            n => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                out.push(Vec3::new(x, y, z));
            }
        }
    }
    out
}

/// [`lattice_anchors`] over the bounding box of `points`.
pub fn lattice_over(points: &[Vec3], shape: [usize; 3], pad: f64) -> Vec<Vec3> {
    let lo = points.iter().fold(Vec3::repeat(f64::INFINITY), |a, c| a.inf(c));
    let hi = points.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, c| a.sup(c));
    lattice_anchors(&lo, &hi, shape, pad)
}

/// Farthest-point ordering starting from the point nearest the centroid, so
/// every prefix is a spread-out subset.
pub fn nested_order(points: &[Vec3]) -> Vec<Vec3> {
    if points.is_empty() {
        return Vec::new();
    }
    let center: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let argmin = |d: &[f64]| {
        (0..d.len())
            .min_by(|&a, &b| d[a].total_cmp(&d[b]))
            .expect("non-empty")
    };
    let first = argmin(&points.iter().map(|p| (p - center).norm_squared()).collect::<Vec<_>>());
    let mut order = vec![first];
    let mut nearest: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while order.len() < points.len() {
        let next = (0..points.len())
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .expect("non-empty");
        order.push(next);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    order.into_iter().map(|i| points[i]).collect()
}
