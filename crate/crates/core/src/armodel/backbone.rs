use super::linalg::{add_assign, affine, dot, mtv, mv, outer_acc, rmsnorm, rmsnorm_back};
use super::{Model, ModelError, ModelParams};
use crate::georope::Rope3d;
use crate::molio::Vec3;

/// Token ids with their canonical coordinates; special tokens sit at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneInput {
    pub tokens: Vec<usize>,
    pub coords: Vec<Vec3>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x_in: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    r_a: Vec<f64>,
    v: Vec<Vec<f64>>,
    vn: Vec<Vec<f64>>,
    rq: Vec<Vec<f64>>,
    rk: Vec<Vec<f64>>,
    /// Row `i` holds weights over `0..=i`.
    w: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
    x_mid: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    r_b: Vec<f64>,
    t1: Vec<Vec<f64>>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BackboneCache {
    pub input: BackboneInput,
    /// Nyström encodings, fixed across layers.
    pub zn: Vec<Vec<f64>>,
    angles: Vec<Vec<(f64, f64)>>,
    layers: Vec<LayerCache>,
    x_final: Vec<Vec<f64>>,
    r_final: Vec<f64>,
    /// Context embeddings `h_i`, one per position.
    pub h: Vec<Vec<f64>>,
}

fn rotated(angles: &[(f64, f64)], v: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = v.to_vec();
    Rope3d::rotate_with(angles, &mut out, transpose);
    out
}

impl Model {
    /// Causal forward pass; `h[i]` depends only on positions `0..=i`.
    pub fn forward_backbone(&self, input: &BackboneInput) -> Result<BackboneCache, ModelError> {
        let n = input.tokens.len();
        if n == 0 {
            return Err(ModelError::EmptySequence);
        }
        if input.coords.len() != n {
            return Err(ModelError::Config(format!(
                "{} tokens but {} coordinates",
                n,
                input.coords.len()
            )));
        }
        let vocab = self.vocab().size();
        if let Some(&t) = input.tokens.iter().find(|&&t| t >= vocab) {
            return Err(ModelError::Config(format!("token id {t} outside vocabulary")));
        }
        let p = &self.params;
        let (d, m) = (self.cfg.d(), self.cfg.m());
        let scale = self.cfg.geo.score_scale();
        let zn: Vec<Vec<f64>> = input.coords.iter().map(|c| self.nystrom().encode(c)).collect();
        let angles: Vec<_> = input.coords.iter().map(|c| self.rope().angles(c)).collect();
        let mut x: Vec<Vec<f64>> = input
            .tokens
            .iter()
            .map(|&t| p.embed[t * d..(t + 1) * d].to_vec())
            .collect();
        let mut layers = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let x_in = x.clone();
            let (a, r_a): (Vec<_>, Vec<_>) = x.iter().map(|xi| rmsnorm(xi, &lp.g_attn)).unzip();
            let q: Vec<_> = a.iter().map(|ai| mv(&lp.wq, ai)).collect();
            let k: Vec<_> = a.iter().map(|ai| mv(&lp.wk, ai)).collect();
            let v: Vec<_> = a.iter().map(|ai| mv(&lp.wv, ai)).collect();
            let vn: Vec<_> = zn.iter().map(|z| mv(&lp.wv_nys, z)).collect();
            let rq: Vec<_> = (0..n).map(|i| rotated(&angles[i], &q[i], false)).collect();
            let rk: Vec<_> = (0..n).map(|i| rotated(&angles[i], &k[i], false)).collect();
            let mut w = Vec::with_capacity(n);
            let mut o = Vec::with_capacity(n);
            for i in 0..n {
                let mut row: Vec<f64> = (0..=i)
                    .map(|j| (dot(&rq[i], &rk[j]) + dot(&zn[i], &zn[j])) * scale)
                    .collect();
                super::heads::softmax_in_place(&mut row);
                let mut oi = vec![0.0; d + m];
                for (j, &wij) in row.iter().enumerate() {
                    for (t, val) in oi[..d].iter_mut().zip(&v[j]) {
                        *t += wij * val;
                    }
                    for (t, val) in oi[d..].iter_mut().zip(&vn[j]) {
                        *t += wij * val;
                    }
                }
                w.push(row);
                o.push(oi);
            }
            let x_mid: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut xm = x_in[i].clone();
                    add_assign(&mut xm, &mv(&lp.wo, &o[i]));
                    xm
                })
                .collect();
            let (b, r_b): (Vec<_>, Vec<_>) = x_mid.iter().map(|xi| rmsnorm(xi, &lp.g_ff)).unzip();
            let t1: Vec<Vec<f64>> = b
                .iter()
                .map(|bi| affine(&lp.w1, &lp.b1, bi).into_iter().map(f64::tanh).collect())
                .collect();
            x = (0..n)
                .map(|i| {
                    let mut xo = x_mid[i].clone();
                    add_assign(&mut xo, &affine(&lp.w2, &lp.b2, &t1[i]));
                    xo
                })
                .collect();
            layers.push(LayerCache {
                x_in,
                a,
                r_a,
                v,
                vn,
                rq,
                rk,
                w,
                o,
                x_mid,
                b,
                r_b,
                t1,
            });
        }
        let (h, r_final): (Vec<_>, Vec<_>) = x.iter().map(|xi| rmsnorm(xi, &p.g_final)).unzip();
        Ok(BackboneCache {
            input: input.clone(),
            zn,
            angles,
            layers,
            x_final: x,
            r_final,
            h,
        })
    }

    /// Accumulates parameter gradients given `dL/dh` for every position.
    pub(crate) fn backward_backbone(&self, cache: &BackboneCache, dh: &[Vec<f64>], g: &mut ModelParams) {
        let p = &self.params;
        let (d, m) = (self.cfg.d(), self.cfg.m());
        let scale = self.cfg.geo.score_scale();
        let n = dh.len();
        let mut dx: Vec<Vec<f64>> = (0..n)
            .map(|i| rmsnorm_back(&cache.x_final[i], &p.g_final, cache.r_final[i], &dh[i], &mut g.g_final))
            .collect();
        for (li, lc) in cache.layers.iter().enumerate().rev() {
            let lp = &p.layers[li];
            let gl = &mut g.layers[li];
            // feed-forward block
            let mut dx_mid = dx.clone();
            for i in 0..n {
                outer_acc(&mut gl.w2, &dx[i], &lc.t1[i]);
                add_assign(&mut gl.b2, &dx[i]);
                let dt1 = mtv(&lp.w2, &dx[i], self.cfg.d_ff);
                let du1: Vec<f64> = dt1.iter().zip(&lc.t1[i]).map(|(d, t)| d * (1.0 - t * t)).collect();
                outer_acc(&mut gl.w1, &du1, &lc.b[i]);
                add_assign(&mut gl.b1, &du1);
                let db = mtv(&lp.w1, &du1, d);
                let dxm = rmsnorm_back(&lc.x_mid[i], &lp.g_ff, lc.r_b[i], &db, &mut gl.g_ff);
                add_assign(&mut dx_mid[i], &dxm);
            }
            // attention block
            let mut drq = vec![vec![0.0; d]; n];
            let mut drk = vec![vec![0.0; d]; n];
            let mut dv = vec![vec![0.0; d]; n];
            let mut dvn = vec![vec![0.0; m]; n];
            for i in 0..n {
                outer_acc(&mut gl.wo, &dx_mid[i], &lc.o[i]);
                let d_o = mtv(&lp.wo, &dx_mid[i], d + m);
                let row = &lc.w[i];
                let dw: Vec<f64> = (0..=i)
                    .map(|j| dot(&d_o[..d], &lc.v[j]) + dot(&d_o[d..], &lc.vn[j]))
                    .collect();
                for j in 0..=i {
                    for (t, val) in dv[j].iter_mut().zip(&d_o[..d]) {
                        *t += row[j] * val;
                    }
                    for (t, val) in dvn[j].iter_mut().zip(&d_o[d..]) {
                        *t += row[j] * val;
                    }
                }
                let mean = dot(row, &dw);
                for j in 0..=i {
                    let ds = row[j] * (dw[j] - mean) * scale;
                    for (t, val) in drq[i].iter_mut().zip(&lc.rk[j]) {
                        *t += ds * val;
                    }
                    for (t, val) in drk[j].iter_mut().zip(&lc.rq[i]) {
                        *t += ds * val;
                    }
                }
            }
            let mut dx_in = dx_mid;
            for i in 0..n {
                let dq = rotated(&cache.angles[i], &drq[i], true);
                let dk = rotated(&cache.angles[i], &drk[i], true);
                outer_acc(&mut gl.wq, &dq, &lc.a[i]);
                outer_acc(&mut gl.wk, &dk, &lc.a[i]);
                outer_acc(&mut gl.wv, &dv[i], &lc.a[i]);
                outer_acc(&mut gl.wv_nys, &dvn[i], &cache.zn[i]);
                let mut da = mtv(&lp.wq, &dq, d);
                add_assign(&mut da, &mtv(&lp.wk, &dk, d));
                add_assign(&mut da, &mtv(&lp.wv, &dv[i], d));
                let dxa = rmsnorm_back(&lc.x_in[i], &lp.g_attn, lc.r_a[i], &da, &mut gl.g_attn);
                add_assign(&mut dx_in[i], &dxa);
            }
            dx = dx_in;
        }
        for (i, &t) in cache.input.tokens.iter().enumerate() {
            add_assign(&mut g.embed[t * d..(t + 1) * d], &dx[i]);
        }
    }
}
