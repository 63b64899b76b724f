use super::{GeoError, Rope3d};
use crate::molio::Vec3;

/// Token latent `[z_type, z_nystrom]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLatent {
    pub z_type: Vec<f64>,
    pub z_nystrom: Vec<f64>,
}

impl TokenLatent {
    pub fn new(z_type: Vec<f64>, z_nystrom: Vec<f64>) -> Self {
        Self { z_type, z_nystrom }
    }

    pub fn width(&self) -> usize {
        self.z_type.len() + self.z_nystrom.len()
    }

    /// Concatenation `[z_type, z_nystrom]`.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = self.z_type.clone();
        out.extend_from_slice(&self.z_nystrom);
        out
    }
}

/// Block-diagonal projection weights, row-major. The Nyström blocks of the
/// query and key projections are the identity and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct QkvWeights {
    pub d: usize,
    pub m: usize,
    /// `d x d`
    pub wq: Vec<f64>,
    /// `d x d`
    pub wk: Vec<f64>,
    /// `d x d`
    pub wv: Vec<f64>,
    /// `m x m`
    pub wv_nys: Vec<f64>,
}

impl QkvWeights {
    pub fn identity(d: usize, m: usize) -> Self {
        let eye = |n: usize| {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                a[i * n + i] = 1.0;
            }
            a
        };
        Self {
            d,
            m,
            wq: eye(d),
            wk: eye(d),
            wv: eye(d),
            wv_nys: eye(m),
        }
    }
}

pub(crate) fn matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    a.chunks_exact(n)
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(expected: usize, found: usize) -> Result<(), GeoError> {
    if expected == found {
        Ok(())
    } else {
        Err(GeoError::Shape { expected, found })
    }
}

/// Returns `(q, k, v)`.
pub fn project_qkv(
    z: &TokenLatent,
    w: &QkvWeights,
) -> Result<(TokenLatent, TokenLatent, TokenLatent), GeoError> {
    check(w.d, z.z_type.len())?;
    check(w.m, z.z_nystrom.len())?;
    check(w.d * w.d, w.wq.len())?;
    check(w.d * w.d, w.wk.len())?;
    check(w.d * w.d, w.wv.len())?;
    check(w.m * w.m, w.wv_nys.len())?;
    let q = TokenLatent::new(matvec(&w.wq, &z.z_type), z.z_nystrom.clone());
    let k = TokenLatent::new(matvec(&w.wk, &z.z_type), z.z_nystrom.clone());
    let v = TokenLatent::new(matvec(&w.wv, &z.z_type), matvec(&w.wv_nys, &z.z_nystrom));
    Ok((q, k, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTerms {
    /// `<R_ci q_type, R_cj k_type>`
    pub rope: f64,
    /// `<q_nys, k_nys>`
    pub nystrom: f64,
    pub total: f64,
    /// `total * scale`
    pub scaled: f64,
}

pub fn attention_score(
    q: &TokenLatent,
    k: &TokenLatent,
    ci: &Vec3,
    cj: &Vec3,
    rope: &Rope3d,
    scale: f64,
) -> Result<ScoreTerms, GeoError> {
    let rq = rope.apply(&q.z_type, ci)?;
    let rk = rope.apply(&k.z_type, cj)?;
    check(q.z_nystrom.len(), k.z_nystrom.len())?;
    let rope_term = dot(&rq, &rk);
    let nystrom = dot(&q.z_nystrom, &k.z_nystrom);
    let total = rope_term + nystrom;
    Ok(ScoreTerms {
        rope: rope_term,
        nystrom,
        total,
        scaled: total * scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Row `i` holds the softmax weights over positions `0..=i`.
    pub weights: Vec<Vec<f64>>,
    pub outputs: Vec<TokenLatent>,
}

/// Numerically stable softmax in place.
pub(crate) fn softmax(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Masked softmax attention: position `i` attends to `0..=i`.
pub fn causal_attention(
    q: &[TokenLatent],
    k: &[TokenLatent],
    v: &[TokenLatent],
    coords: &[Vec3],
    rope: &Rope3d,
    scale: f64,
) -> Result<AttentionOutput, GeoError> {
    let n = q.len();
    check(n, k.len())?;
    check(n, v.len())?;
    check(n, coords.len())?;
    let rq = q
        .iter()
        .zip(coords)
        .map(|(t, c)| rope.apply(&t.z_type, c))
        .collect::<Result<Vec<_>, _>>()?;
    let rk = k
        .iter()
        .zip(coords)
        .map(|(t, c)| rope.apply(&t.z_type, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut weights = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<f64> = (0..=i)
            .map(|j| (dot(&rq[i], &rk[j]) + dot(&q[i].z_nystrom, &k[j].z_nystrom)) * scale)
            .collect();
        softmax(&mut row);
        let mut zt = vec![0.0; v[i].z_type.len()];
        let mut zn = vec![0.0; v[i].z_nystrom.len()];
        for (j, &a) in row.iter().enumerate() {
            for (o, x) in zt.iter_mut().zip(&v[j].z_type) {
                *o += a * x;
            }
            for (o, x) in zn.iter_mut().zip(&v[j].z_nystrom) {
                *o += a * x;
            }
        }
        weights.push(row);
        outputs.push(TokenLatent::new(zt, zn));
    }
    Ok(AttentionOutput { weights, outputs })
}
