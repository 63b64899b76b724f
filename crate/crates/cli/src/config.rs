use std::path::{Path, PathBuf};

use iar_core::armodel::{
    DiffusionSchedule, GuidanceConfig, ModelConfig, OptimizerKind, SampleOptions, TrainConfig,
};
use iar_core::georope::{lattice_over, GeoRopeConfig};
use iar_core::Vec3;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Every knob of a run in one flat TOML document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Multi-frame XYZ training set; synthetic data when absent.
    pub dataset: Option<PathBuf>,
    pub synth_count: usize,
    pub synth_seed: u64,
    pub out_dir: PathBuf,

    pub d_type: usize,
    pub rope_base: f64,
    pub anchor_shape: [usize; 3],
    pub anchor_pad: f64,
    pub rbf_sigma: f64,
    pub chol_jitter: f64,

    pub n_classes: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub denoiser_hidden: usize,
    pub denoiser_embed: usize,
    pub sigma_features: usize,
    pub sigma_data: f64,

    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_steps: usize,
    pub guidance_scale: f64,
    pub p_drop: f64,

    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub momentum: f64,
    pub loss_lambda: f64,
    pub grad_clip: f64,

    pub num_samples: usize,
    pub temperature: f64,
    pub max_len: usize,
    pub class_id: Option<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = DiffusionSchedule::default();
        let guidance = GuidanceConfig::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            dataset: None,
            synth_count: 50,
            synth_seed: 0,
            out_dir: PathBuf::from("run"),
            d_type: 24,
            rope_base: GeoRopeConfig::DEFAULT_ROPE_BASE,
            anchor_shape: [3, 3, 2],
            anchor_pad: 1.0,
            rbf_sigma: GeoRopeConfig::DEFAULT_RBF_SIGMA,
            chol_jitter: GeoRopeConfig::DEFAULT_CHOL_JITTER,
            n_classes: 16,
            n_layers: 2,
            d_ff: 64,
            denoiser_hidden: 64,
            denoiser_embed: 8,
            sigma_features: 4,
            sigma_data: 1.0,
            sigma_min: schedule.sigma_min,
            sigma_max: schedule.sigma_max,
            n_steps: schedule.n_steps,
            guidance_scale: guidance.scale,
            p_drop: guidance.p_drop,
            steps: train.steps,
            batch_size: train.batch_size,
            optimizer: Optimizer::Sgd,
            learning_rate: train.learning_rate,
            final_lr_fraction: train.final_lr_fraction,
            momentum: train.momentum,
            loss_lambda: train.loss_lambda,
            grad_clip: train.grad_clip,
            num_samples: 32,
            temperature: 1.0,
            max_len: 32,
            class_id: None,
        }
    }
}

pub const SEED_ENV: &str = "IAR_SEED";

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Data(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Reads the file, applies `IAR_SEED` and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let data = |e: iar_core::armodel::ModelError| CliError::Data(format!("config: {e}"));
        if self.anchor_shape.iter().any(|&s| s == 0) {
            return Err(CliError::Data("config: anchor_shape entries must be positive".into()));
        }
        if !(self.anchor_pad >= 0.0 && self.anchor_pad.is_finite()) {
            return Err(CliError::Data("config: anchor_pad must be non-negative".into()));
        }
        if self.dataset.is_none() && self.synth_count == 0 {
            return Err(CliError::Data("config: synth_count must be positive".into()));
        }
        if self.num_samples == 0 || self.max_len == 0 {
            return Err(CliError::Data("config: num_samples and max_len must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(CliError::Data("config: temperature must be non-negative".into()));
        }
        // A placeholder anchor set is enough to check the model-level fields.
        let probe = self.model_config(vec![Vec3::zeros()]);
        probe.validate().map_err(data)?;
        if let Some(c) = self.class_id {
            probe.vocab().class_token(c).map_err(data)?;
        }
        self.train_config().validate().map_err(data)
    }

    /// Lattice anchors over the bounding box of `coords`.
    pub fn anchors(&self, coords: &[Vec3]) -> Vec<Vec3> {
        lattice_over(coords, self.anchor_shape, self.anchor_pad)
    }

    pub fn model_config(&self, anchors: Vec<Vec3>) -> ModelConfig {
        let mut geo = GeoRopeConfig::new(self.d_type, anchors);
        geo.rope_base = self.rope_base;
        geo.rbf_sigma = self.rbf_sigma;
        geo.chol_jitter = self.chol_jitter;
        let mut cfg = ModelConfig::new(geo);
        cfg.n_classes = self.n_classes;
        cfg.n_layers = self.n_layers;
        cfg.d_ff = self.d_ff;
        cfg.denoiser_hidden = self.denoiser_hidden;
        cfg.denoiser_embed = self.denoiser_embed;
        cfg.sigma_features = self.sigma_features;
        cfg.sigma_data = self.sigma_data;
        cfg.schedule = DiffusionSchedule {
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
            n_steps: self.n_steps,
        };
        cfg.guidance = GuidanceConfig {
            scale: self.guidance_scale,
            p_drop: self.p_drop,
        };
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            final_lr_fraction: self.final_lr_fraction,
            momentum: self.momentum,
            optimizer: match self.optimizer {
                Optimizer::Sgd => OptimizerKind::Sgd,
                Optimizer::Adam => OptimizerKind::Adam,
            },
            loss_lambda: self.loss_lambda,
            grad_clip: self.grad_clip,
            seed: self.seed,
        }
    }

    pub fn sample_options(&self, seed: u64) -> SampleOptions {
        SampleOptions {
            class_id: self.class_id,
            guidance_scale: self.guidance_scale,
            temperature: self.temperature,
            max_len: self.max_len,
            seed,
        }
    }
}
