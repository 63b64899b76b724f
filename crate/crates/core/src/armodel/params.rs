use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

/// One transformer block. Matrices are row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub g_attn: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    /// `m x m` value block acting on the Nyström channel.
    pub wv_nys: Vec<f64>,
    /// `d x (d + m)`
    pub wo: Vec<f64>,
    pub g_ff: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `vocab x d`
    pub embed: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub g_final: Vec<f64>,
    /// `(n_el + 1) x d`
    pub type_w: Vec<f64>,
    pub type_b: Vec<f64>,
    /// `n_el x denoiser_embed`
    pub den_embed: Vec<f64>,
    pub den_w1: Vec<f64>,
    pub den_b1: Vec<f64>,
    /// `hidden x 3`: coordinate path of the first layer, scaled per unit by
    /// the conditioning gate `exp(den_wg · cond + den_bg)`.
    pub den_wx: Vec<f64>,
    pub den_wg: Vec<f64>,
    pub den_bg: Vec<f64>,
    pub den_w2: Vec<f64>,
    pub den_b2: Vec<f64>,
    /// `3 x hidden`
    pub den_w3: Vec<f64>,
    pub den_b3: Vec<f64>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn normal(&mut self, n: usize, std: f64) -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }

    /// `rows x cols` with std `gain / sqrt(cols)`.
    fn matrix(&mut self, rows: usize, cols: usize, gain: f64) -> Vec<f64> {
        self.normal(rows * cols, gain / (cols as f64).sqrt())
    }
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let (d, m, f) = (cfg.d(), cfg.m(), cfg.d_ff);
        let vocab = cfg.vocab();
        let (h, e) = (cfg.denoiser_hidden, cfg.denoiser_embed);
        let mut r = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let embed = r.normal(vocab.size() * d, 1.0);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                g_attn: vec![1.0; d],
                wq: r.matrix(d, d, 1.0),
                wk: r.matrix(d, d, 1.0),
                wv: r.matrix(d, d, 1.0),
                wv_nys: r.matrix(m, m, 1.0),
                wo: r.matrix(d, d + m, 0.5),
                g_ff: vec![1.0; d],
                w1: r.matrix(f, d, 1.0),
                b1: vec![0.0; f],
                w2: r.matrix(d, f, 0.5),
                b2: vec![0.0; d],
            })
            .collect();
        Self {
            embed,
            layers,
            g_final: vec![1.0; d],
            type_w: r.matrix(vocab.n_type_outputs(), d, 1.0),
            type_b: vec![0.0; vocab.n_type_outputs()],
            den_embed: r.normal(vocab.n_elements() * e, 1.0),
            den_w1: r.matrix(h, cfg.denoiser_input(), 1.0),
            den_b1: vec![0.0; h],
            den_wx: r.matrix(h, 3, 1.0),
            den_wg: r.matrix(h, cfg.denoiser_input() - 3, 0.1),
            den_bg: vec![0.0; h],
            den_w2: r.matrix(h, h, 1.0),
            den_b2: vec![0.0; h],
            den_w3: r.matrix(3, h, 0.1),
            den_b3: vec![0.0; 3],
        }
    }

    /// Tensor names and contents in declaration order.
    pub fn named_tensors(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = vec![("embed".to_string(), &self.embed)];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in [
                ("g_attn", &l.g_attn),
                ("wq", &l.wq),
                ("wk", &l.wk),
                ("wv", &l.wv),
                ("wv_nys", &l.wv_nys),
                ("wo", &l.wo),
                ("g_ff", &l.g_ff),
                ("w1", &l.w1),
                ("b1", &l.b1),
                ("w2", &l.w2),
                ("b2", &l.b2),
            ] {
                out.push((format!("layer{i}.{name}"), t));
            }
        }
        for (name, t) in [
            ("g_final", &self.g_final),
            ("type_w", &self.type_w),
            ("type_b", &self.type_b),
            ("den_embed", &self.den_embed),
            ("den_w1", &self.den_w1),
            ("den_b1", &self.den_b1),
            ("den_wx", &self.den_wx),
            ("den_wg", &self.den_wg),
            ("den_bg", &self.den_bg),
            ("den_w2", &self.den_w2),
            ("den_b2", &self.den_b2),
            ("den_w3", &self.den_w3),
            ("den_b3", &self.den_b3),
        ] {
            out.push((name.to_string(), t));
        }
        out
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.embed];
        for l in &mut self.layers {
            out.extend([
                &mut l.g_attn,
                &mut l.wq,
                &mut l.wk,
                &mut l.wv,
                &mut l.wv_nys,
                &mut l.wo,
                &mut l.g_ff,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        out.extend([
            &mut self.g_final,
            &mut self.type_w,
            &mut self.type_b,
            &mut self.den_embed,
            &mut self.den_w1,
            &mut self.den_b1,
            &mut self.den_wx,
            &mut self.den_wg,
            &mut self.den_bg,
            &mut self.den_w2,
            &mut self.den_b2,
            &mut self.den_w3,
            &mut self.den_b3,
        ]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn len(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Self) {
        let theirs: Vec<&Vec<f64>> = other.named_tensors().into_iter().map(|(_, t)| t).collect();
        for (a, b) in self.tensors_mut().into_iter().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// All values flattened in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.named_tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    /// Inverse of [`Self::flatten`]; `values` must have length [`Self::len`].
    pub fn assign_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.len());
        let mut at = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[at..at + n]);
            at += n;
        }
    }

    pub fn shape_matches(&self, cfg: &ModelConfig) -> bool {
        let reference = Self::init(cfg, 0);
        let shapes = |p: &Self| -> Vec<usize> { p.named_tensors().iter().map(|(_, t)| t.len()).collect() };
        shapes(self) == shapes(&reference)
    }
}
