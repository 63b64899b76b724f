//! Hierarchical autoregressive model: a causal transformer over atom tokens
//! with a categorical type head and a diffusion coordinate head.

mod backbone;
mod checkpoint;
mod heads;
mod linalg;
mod params;
mod sample;
mod train;

pub use backbone::{BackboneCache, BackboneInput};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use heads::{cross_entropy, edm_coefficients, sigma_features, softmax, DenoiserOutput};
pub use params::{LayerParams, ModelParams};
pub use sample::{cfg_lerp, SampleOptions, SampleResult};
pub use train::{
    Draws, Example, LossParts, OptimizerKind, StepLoss, TrainConfig, TrainOutcome, Trainer,
};

use thiserror::Error;

use crate::georope::{GeoError, GeoRopeConfig, NystromBasis, Rope3d};
use crate::molio::ElementTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("empty sequence")]
    EmptySequence,
    #[error("element with charge {0} is not in the model vocabulary")]
    UnknownElement(u8),
    #[error("class id {0} is outside the model's class range")]
    UnknownClass(u32),
    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Noise levels for training and sampling, Å.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_steps: usize,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self {
            sigma_min: 0.01,
            sigma_max: 5.0,
            n_steps: 50,
        }
    }
}

impl DiffusionSchedule {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(ModelError::Config(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.n_steps == 0 {
            return Err(ModelError::Config("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Log-uniform draw from `u` in `[0, 1)`.
    pub fn sigma_at(&self, u: f64) -> f64 {
        (self.sigma_min.ln() + u * (self.sigma_max.ln() - self.sigma_min.ln())).exp()
    }

    /// Descending log-linear grid of `n_steps + 1` levels from `sigma_max` to `sigma_min`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.n_steps as f64;
        (0..=self.n_steps)
            .map(|k| {
                if k == 0 {
                    self.sigma_max
                } else if k == self.n_steps {
                    self.sigma_min
                } else {
                    let f = k as f64 / n;
                    (self.sigma_max.ln() * (1.0 - f) + self.sigma_min.ln() * f).exp()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    /// Guidance scale `s`; 0 is unconditional, 1 is conditional.
    pub scale: f64,
    /// Probability of replacing the class token with the null class in training.
    pub p_drop: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            p_drop: 0.1,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(ModelError::Config(format!("guidance scale {} < 0", self.scale)));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(ModelError::Config(format!("p_drop {} outside [0, 1)", self.p_drop)));
        }
        Ok(())
    }
}

/// Token ids: elements `0..n_el`, then EOS, BOS, the null class and one id
/// per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    elements: Vec<u8>,
    n_classes: usize,
}

impl Vocab {
    pub fn new(elements: Vec<u8>, n_classes: usize) -> Self {
        Self {
            elements,
            n_classes,
        }
    }

    pub fn elements(&self) -> &[u8] {
        &self.elements
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn eos(&self) -> usize {
        self.elements.len()
    }

    pub fn bos(&self) -> usize {
        self.elements.len() + 1
    }

    pub fn null_class(&self) -> usize {
        self.elements.len() + 2
    }

    pub fn class_token(&self, class_id: u32) -> Result<usize, ModelError> {
        if (class_id as usize) < self.n_classes {
            Ok(self.elements.len() + 3 + class_id as usize)
        } else {
            Err(ModelError::UnknownClass(class_id))
        }
    }

    /// Class slot token: the class, or the null class for `None`.
    pub fn class_slot(&self, class_id: Option<u32>) -> Result<usize, ModelError> {
        class_id.map_or(Ok(self.null_class()), |c| self.class_token(c))
    }

    pub fn size(&self) -> usize {
        self.elements.len() + 3 + self.n_classes
    }

    /// Number of type-head outputs: elements plus EOS.
    pub fn n_type_outputs(&self) -> usize {
        self.elements.len() + 1
    }

    pub fn element_index(&self, charge: u8) -> Result<usize, ModelError> {
        self.elements
            .iter()
            .position(|&c| c == charge)
            .ok_or(ModelError::UnknownElement(charge))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub geo: GeoRopeConfig,
    /// Nuclear charges in the vocabulary, ascending.
    pub elements: Vec<u8>,
    pub n_classes: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub denoiser_hidden: usize,
    /// Width of the denoiser's own type embedding.
    pub denoiser_embed: usize,
    /// Number of sin/cos frequency pairs embedding `ln σ`.
    pub sigma_features: usize,
    /// EDM preconditioning scale, Å.
    pub sigma_data: f64,
    pub schedule: DiffusionSchedule,
    pub guidance: GuidanceConfig,
}

impl ModelConfig {
    /// Small defaults for the shipped element set and class table.
    pub fn new(geo: GeoRopeConfig) -> Self {
        Self {
            geo,
            elements: ElementTable::standard()
                .elements()
                .iter()
                .map(|e| e.charge)
                .collect(),
            n_classes: 16,
            n_layers: 2,
            d_ff: 64,
            denoiser_hidden: 64,
            denoiser_embed: 8,
            sigma_features: 4,
            sigma_data: 1.0,
            schedule: DiffusionSchedule::default(),
            guidance: GuidanceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.geo.validate()?;
        if self.elements.is_empty() {
            return Err(ModelError::Config("element vocabulary is empty".into()));
        }
        if self.elements.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::Config("elements must be strictly ascending".into()));
        }
        for &c in &self.elements {
            if ElementTable::standard().by_charge(c).is_none() {
                return Err(ModelError::UnknownElement(c));
            }
        }
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("denoiser_hidden", self.denoiser_hidden),
            ("denoiser_embed", self.denoiser_embed),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.sigma_data > 0.0 && self.sigma_data.is_finite()) {
            return Err(ModelError::Config("sigma_data must be positive".into()));
        }
        self.schedule.validate()?;
        self.guidance.validate()
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.elements.clone(), self.n_classes)
    }

    pub fn d(&self) -> usize {
        self.geo.d_type
    }

    pub fn m(&self) -> usize {
        self.geo.m()
    }

    /// Width of the denoiser MLP input.
    pub fn denoiser_input(&self) -> usize {
        3 + 2 * self.sigma_features + self.denoiser_embed + self.d()
    }
}

/// Configuration, parameters and the fixed geometric encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ModelParams,
    vocab: Vocab,
    rope: Rope3d,
    nystrom: NystromBasis,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg, seed);
        Self::from_params(cfg, params)
    }

    pub fn from_params(cfg: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        cfg.validate()?;
        if !params.shape_matches(&cfg) {
            return Err(ModelError::Config("parameter shapes do not match config".into()));
        }
        Ok(Self {
            vocab: cfg.vocab(),
            rope: cfg.geo.rope(),
            nystrom: NystromBasis::from_config(&cfg.geo)?,
            cfg,
            params,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn rope(&self) -> &Rope3d {
        &self.rope
    }

    pub fn nystrom(&self) -> &NystromBasis {
        &self.nystrom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_layout() {
        let v = Vocab::new(vec![1, 6, 7, 8, 9], 16);
        assert_eq!((v.eos(), v.bos(), v.null_class()), (5, 6, 7));
        assert_eq!(v.class_token(0), Ok(8));
        assert_eq!(v.class_token(15), Ok(23));
        assert_eq!(v.class_token(16), Err(ModelError::UnknownClass(16)));
        assert_eq!(v.size(), 24);
        assert_eq!(v.element_index(8), Ok(3));
        assert_eq!(v.element_index(2), Err(ModelError::UnknownElement(2)));
    }

    #[test]
    fn schedule_grid() {
        let s = DiffusionSchedule::default();
        let g = s.grid();
        assert_eq!(g.len(), 51);
        assert_eq!((g[0], g[50]), (5.0, 0.01));
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
        assert!((s.sigma_at(0.0) - 0.01).abs() < 1e-15);
        assert!((s.sigma_at(1.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        use crate::molio::Vec3;
        let geo = GeoRopeConfig::new(12, vec![Vec3::zeros(), Vec3::x()]);
        let cfg = ModelConfig::new(geo);
        assert!(cfg.validate().is_ok());
        let mut c = cfg.clone();
        c.elements = vec![6, 1];
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.schedule.sigma_min = 6.0;
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.guidance.p_drop = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg;
        c.n_layers = 0;
        assert!(c.validate().is_err());
    }
}
