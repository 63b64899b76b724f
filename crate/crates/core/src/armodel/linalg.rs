//! Dense row-major helpers for the model's forward and backward passes.

pub(crate) const RMS_EPS: f64 = 1e-6;

/// `W x` for `W` of shape `rows x x.len()`.
pub(crate) fn mv(w: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(w.len() % n, 0);
    w.chunks_exact(n)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `W x + b`.
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = mv(w, x);
    for (y, b) in y.iter_mut().zip(b) {
        *y += b;
    }
    y
}

/// `W^T dy` for `W` of shape `dy.len() x cols`.
pub(crate) fn mtv(w: &[f64], dy: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &d) in w.chunks_exact(cols).zip(dy) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * d;
        }
    }
    out
}

/// `G += dy x^T`.
pub(crate) fn outer_acc(g: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &d) in g.chunks_exact_mut(cols).zip(dy) {
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += d * xv;
        }
    }
}

pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `g * x / rms(x)`; returns the output and `rms(x)`.
pub(crate) fn rmsnorm(x: &[f64], g: &[f64]) -> (Vec<f64>, f64) {
    let r = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + RMS_EPS).sqrt();
    (x.iter().zip(g).map(|(v, g)| g * v / r).collect(), r)
}

/// Backward of [`rmsnorm`]: accumulates into `dg` and returns `dx`.
pub(crate) fn rmsnorm_back(x: &[f64], g: &[f64], r: f64, dy: &[f64], dg: &mut [f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let xhat: Vec<f64> = x.iter().map(|v| v / r).collect();
    let dxhat: Vec<f64> = dy.iter().zip(g).map(|(d, g)| d * g).collect();
    for ((dg, d), xh) in dg.iter_mut().zip(dy).zip(&xhat) {
        *dg += d * xh;
    }
    let proj = dot(&dxhat, &xhat) / n;
    dxhat
        .iter()
        .zip(&xhat)
        .map(|(d, xh)| (d - xh * proj) / r)
        .collect()
}
