use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::heads::softmax;
use super::{BackboneInput, Model, ModelError};
use crate::molio::{Molecule, Vec3};

/// Guidance blend `(1 - s) u + s c`. Exactly `u` at `s = 0` and exactly `c`
/// at `s = 1`.
pub fn cfg_lerp(u: &[f64], c: &[f64], s: f64) -> Vec<f64> {
    u.iter().zip(c).map(|(u, c)| (1.0 - s) * u + s * c).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub class_id: Option<u32>,
    pub guidance_scale: f64,
    /// Type-sampling temperature; 0 picks the most likely type.
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            class_id: None,
            guidance_scale: 1.0,
            temperature: 1.0,
            max_len: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub molecule: Molecule,
    /// `max_len` was reached before EOS.
    pub truncated: bool,
}

fn lerp3(u: &Vec3, c: &Vec3, s: f64) -> Vec3 {
    u * (1.0 - s) + c * s
}

impl Model {
    /// Type logits, blended when an unconditional context is given.
    pub fn guided_logits(&self, h_c: &[f64], h_u: Option<&[f64]>, s: f64) -> Vec<f64> {
        let c = self.type_logits(h_c);
        match h_u {
            Some(h_u) => cfg_lerp(&self.type_logits(h_u), &c, s),
            None => c,
        }
    }

    /// Predicted noise, blended when an unconditional context is given.
    pub fn guided_eps(
        &self,
        h_c: &[f64],
        h_u: Option<&[f64]>,
        element: usize,
        x: &Vec3,
        sigma: f64,
        s: f64,
    ) -> Vec3 {
        let c = self.denoise(h_c, element, x, sigma).eps_hat;
        match h_u {
            Some(h_u) => lerp3(&self.denoise(h_u, element, x, sigma).eps_hat, &c, s),
            None => c,
        }
    }

    /// Euler integration of `dx/dσ = ε̂` down the schedule grid from
    /// `x ~ N(0, σ_max² I)`.
    pub fn sample_coord<R: Rng>(
        &self,
        h_c: &[f64],
        h_u: Option<&[f64]>,
        element: usize,
        s: f64,
        rng: &mut R,
    ) -> Vec3 {
        let grid = self.cfg.schedule.grid();
        let mut x = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ) * grid[0];
        for w in grid.windows(2) {
            let eps = self.guided_eps(h_c, h_u, element, &x, w[0], s);
            x += eps * (w[1] - w[0]);
        }
        x
    }

    /// Autoregressive sampling: type, then coordinates, until EOS or `max_len`.
    pub fn sample_molecule(&self, opts: &SampleOptions) -> Result<SampleResult, ModelError> {
        if opts.max_len == 0 {
            return Err(ModelError::Config("max_len must be positive".into()));
        }
        if !(opts.temperature >= 0.0 && opts.guidance_scale >= 0.0) {
            return Err(ModelError::Config("temperature and guidance scale must be non-negative".into()));
        }
        let vocab = self.vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let guided = opts.class_id.is_some() && opts.guidance_scale != 1.0;
        let s = opts.guidance_scale;
        let mut cond = BackboneInput {
            tokens: vec![vocab.bos(), vocab.class_slot(opts.class_id)?],
            coords: vec![Vec3::zeros(); 2],
        };
        let mut uncond = cond.clone();
        uncond.tokens[1] = vocab.null_class();
        let mut atoms = Vec::new();
        let mut coords = Vec::new();
        let mut truncated = true;
        while atoms.len() < opts.max_len {
            let hc = self.forward_backbone(&cond)?.h.pop().expect("non-empty");
            let hu = if guided {
                Some(self.forward_backbone(&uncond)?.h.pop().expect("non-empty"))
            } else {
                None
            };
            let mut logits = self.guided_logits(&hc, hu.as_deref(), s);
            if atoms.is_empty() {
                logits[vocab.eos()] = f64::NEG_INFINITY;
            }
            let t = pick(&logits, opts.temperature, &mut rng);
            if t == vocab.eos() {
                truncated = false;
                break;
            }
            let c = self.sample_coord(&hc, hu.as_deref(), t, s, &mut rng);
            atoms.push(vocab.elements()[t]);
            coords.push(c);
            for input in [&mut cond, &mut uncond] {
                input.tokens.push(t);
                input.coords.push(c);
            }
        }
        let molecule = Molecule::with_class(atoms, coords, opts.class_id)
            .map_err(|e| ModelError::Config(format!("sampled molecule rejected: {e}")))?;
        Ok(SampleResult {
            molecule,
            truncated,
        })
    }
}

/// Argmax at zero temperature (first index on ties), otherwise a draw from
/// `softmax(logits / T)`.
fn pick<R: Rng>(logits: &[f64], temperature: f64, rng: &mut R) -> usize {
    if temperature == 0.0 {
        return logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
            .0;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let p = softmax(&scaled);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}
