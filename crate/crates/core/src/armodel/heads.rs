use super::linalg::{add_assign, affine, mtv, mv, outer_acc};
use super::{Model, ModelParams};
use crate::molio::Vec3;

pub(crate) fn softmax_in_place(x: &mut [f64]) {
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

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// `-log softmax(logits)[target]` and its gradient `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    (lse - logits[target], grad)
}

/// EDM preconditioning `(c_skip, c_out, c_in)` at noise level `sigma`.
pub fn edm_coefficients(sigma: f64, sigma_data: f64) -> (f64, f64, f64) {
    let s2 = sigma * sigma + sigma_data * sigma_data;
    (
        sigma_data * sigma_data / s2,
        sigma * sigma_data / s2.sqrt(),
        1.0 / s2.sqrt(),
    )
}

/// `[sin(w_k ln σ), cos(w_k ln σ)]` for `w_k = 2^k / 4`, `k = 0..n`.
pub fn sigma_features(sigma: f64, n: usize) -> Vec<f64> {
    let ls = sigma.ln();
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let (s, c) = (ls * f64::from(1u32 << k) / 4.0).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Predicted noise with the activations needed for backpropagation.
#[derive(Debug, Clone)]
pub struct DenoiserOutput {
    pub eps_hat: Vec3,
    element: usize,
    sigma: f64,
    input: Vec<f64>,
    px: Vec<f64>,
    gate: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl Model {
    pub fn type_logits(&self, h: &[f64]) -> Vec<f64> {
        affine(&self.params.type_w, &self.params.type_b, h)
    }

    /// `ε̂(x_σ, σ, t, h)`; `element` is the vocabulary index of `t`.
    pub fn denoise(&self, h: &[f64], element: usize, x_sigma: &Vec3, sigma: f64) -> DenoiserOutput {
        let p = &self.params;
        let e = self.cfg.denoiser_embed;
        let (c_skip, c_out, c_in) = edm_coefficients(sigma, self.cfg.sigma_data);
        let mut input = Vec::with_capacity(self.cfg.denoiser_input());
        input.extend((x_sigma * c_in).iter());
        input.extend(sigma_features(sigma, self.cfg.sigma_features));
        input.extend_from_slice(&p.den_embed[element * e..(element + 1) * e]);
        input.extend_from_slice(h);
        let px = mv(&p.den_wx, &input[..3]);
        let gate: Vec<f64> = affine(&p.den_wg, &p.den_bg, &input[3..]).into_iter().map(f64::exp).collect();
        let t1: Vec<f64> = affine(&p.den_w1, &p.den_b1, &input)
            .into_iter()
            .zip(px.iter().zip(&gate))
            .map(|(u, (a, g))| (u + a * g).tanh())
            .collect();
        let t2: Vec<f64> = affine(&p.den_w2, &p.den_b2, &t1).into_iter().map(f64::tanh).collect();
        let f = affine(&p.den_w3, &p.den_b3, &t2);
        let f = Vec3::new(f[0], f[1], f[2]);
        let denoised = x_sigma * c_skip + f * c_out;
        DenoiserOutput {
            eps_hat: (x_sigma - denoised) / sigma,
            element,
            sigma,
            input,
            px,
            gate,
            t1,
            t2,
        }
    }

    /// Accumulates denoiser gradients and returns `dL/dh`.
    pub(crate) fn denoise_backward(&self, out: &DenoiserOutput, d_eps: &Vec3, g: &mut ModelParams) -> Vec<f64> {
        let p = &self.params;
        let e = self.cfg.denoiser_embed;
        let hid = self.cfg.denoiser_hidden;
        let (_, c_out, _) = edm_coefficients(out.sigma, self.cfg.sigma_data);
        let df: Vec<f64> = (d_eps * (-c_out / out.sigma)).iter().copied().collect();
        outer_acc(&mut g.den_w3, &df, &out.t2);
        add_assign(&mut g.den_b3, &df);
        let dt2 = mtv(&p.den_w3, &df, hid);
        let du2: Vec<f64> = dt2.iter().zip(&out.t2).map(|(d, t)| d * (1.0 - t * t)).collect();
        outer_acc(&mut g.den_w2, &du2, &out.t1);
        add_assign(&mut g.den_b2, &du2);
        let dt1 = mtv(&p.den_w2, &du2, hid);
        let du1: Vec<f64> = dt1.iter().zip(&out.t1).map(|(d, t)| d * (1.0 - t * t)).collect();
        outer_acc(&mut g.den_w1, &du1, &out.input);
        add_assign(&mut g.den_b1, &du1);
        let mut din = mtv(&p.den_w1, &du1, out.input.len());
        let dpx: Vec<f64> = du1.iter().zip(&out.gate).map(|(d, g)| d * g).collect();
        outer_acc(&mut g.den_wx, &dpx, &out.input[..3]);
        let dgate: Vec<f64> = du1
            .iter()
            .zip(out.px.iter().zip(&out.gate))
            .map(|(d, (a, g))| d * a * g)
            .collect();
        outer_acc(&mut g.den_wg, &dgate, &out.input[3..]);
        add_assign(&mut g.den_bg, &dgate);
        add_assign(&mut din[3..], &mtv(&p.den_wg, &dgate, out.input.len() - 3));
        let at = 3 + 2 * self.cfg.sigma_features;
        add_assign(
            &mut g.den_embed[out.element * e..(out.element + 1) * e],
            &din[at..at + e],
        );
        din[at + e..].to_vec()
    }

    /// Type-head backward: accumulates head gradients and returns `dL/dh`.
    pub(crate) fn type_backward(&self, h: &[f64], dlogits: &[f64], g: &mut ModelParams) -> Vec<f64> {
        outer_acc(&mut g.type_w, dlogits, h);
        add_assign(&mut g.type_b, dlogits);
        mtv(&self.params.type_w, dlogits, h.len())
    }

    /// Denoised estimate `D(x_σ) = x_σ - σ ε̂`.
    pub fn denoised(&self, h: &[f64], element: usize, x_sigma: &Vec3, sigma: f64) -> Vec3 {
        x_sigma - self.denoise(h, element, x_sigma, sigma).eps_hat * sigma
    }
}
