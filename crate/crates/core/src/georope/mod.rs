//! Geometry-aware attention ingredients: rotary encoding of 3D coordinates,
//! Nyström distance encoding, block-diagonal projections and the combined
//! attention score.

mod attention;
mod nystrom;
mod rope;

pub use attention::{
    attention_score, causal_attention, project_qkv, AttentionOutput, QkvWeights, ScoreTerms,
    TokenLatent,
};
pub use nystrom::{cholesky_lower, lattice_anchors, lattice_over, nested_order, rbf, NystromBasis};
pub use rope::{rope3d_apply, rope3d_apply_rel, Rope3d};

use thiserror::Error;

use crate::molio::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("d_type = {0} is not a positive multiple of 6")]
    TypeWidth(usize),
    #[error("rotary base must exceed 1, got {0}")]
    RopeBase(f64),
    #[error("at least one Nyström anchor is required")]
    NoAnchors,
    #[error("anchors {0} and {1} coincide")]
    DuplicateAnchor(usize, usize),
    #[error("RBF bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("Cholesky jitter must be non-negative, got {0}")]
    Jitter(f64),
    #[error("anchor kernel matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("expected width {expected}, got {found}")]
    Shape { expected: usize, found: usize },
}

/// Widths, rotary frequency ladder and Nyström anchor set.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRopeConfig {
    /// Width of the type component; a multiple of 6.
    pub d_type: usize,
    /// Frequencies are `rope_base^(-t / n_freq)` rad/Å, `t = 0..n_freq`.
    pub rope_base: f64,
    pub anchors: Vec<Vec3>,
    /// RBF bandwidth σ_k, Å.
    pub rbf_sigma: f64,
    pub chol_jitter: f64,
}

impl GeoRopeConfig {
    pub const DEFAULT_ROPE_BASE: f64 = 100.0;
    pub const DEFAULT_RBF_SIGMA: f64 = 1.0;
    pub const DEFAULT_CHOL_JITTER: f64 = 1e-8;

    pub fn new(d_type: usize, anchors: Vec<Vec3>) -> Self {
        Self {
            d_type,
            rope_base: Self::DEFAULT_ROPE_BASE,
            anchors,
            rbf_sigma: Self::DEFAULT_RBF_SIGMA,
            chol_jitter: Self::DEFAULT_CHOL_JITTER,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.d_type == 0 || self.d_type % 6 != 0 {
            return Err(GeoError::TypeWidth(self.d_type));
        }
        if !(self.rope_base > 1.0 && self.rope_base.is_finite()) {
            return Err(GeoError::RopeBase(self.rope_base));
        }
        if self.anchors.is_empty() {
            return Err(GeoError::NoAnchors);
        }
        for i in 0..self.anchors.len() {
            for j in i + 1..self.anchors.len() {
                if self.anchors[i] == self.anchors[j] {
                    return Err(GeoError::DuplicateAnchor(i, j));
                }
            }
        }
        if !(self.rbf_sigma > 0.0 && self.rbf_sigma.is_finite()) {
            return Err(GeoError::Bandwidth(self.rbf_sigma));
        }
        if !(self.chol_jitter >= 0.0 && self.chol_jitter.is_finite()) {
            return Err(GeoError::Jitter(self.chol_jitter));
        }
        Ok(())
    }

    pub fn n_freq(&self) -> usize {
        self.d_type / 6
    }

    pub fn m(&self) -> usize {
        self.anchors.len()
    }

    /// Width of a full token latent `[z_type, z_nystrom]`.
    pub fn latent_width(&self) -> usize {
        self.d_type + self.m()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_freq() as f64;
        (0..self.n_freq())
            .map(|t| self.rope_base.powf(-(t as f64) / n))
            .collect()
    }

    pub fn rope(&self) -> Rope3d {
        Rope3d::new(self.frequencies())
    }

    /// Attention-score temperature `1 / sqrt(d_type + m)`.
    pub fn score_scale(&self) -> f64 {
        1.0 / (self.latent_width() as f64).sqrt()
    }
}
