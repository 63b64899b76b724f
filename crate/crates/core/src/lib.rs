//! Autoregressive generation of 3D molecules over canonical token sequences.
//!
//! - [`molio`]: molecules, element tables, XYZ I/O and synthetic data.
//! - [`canon`]: inertial-frame pose and canonical atom ordering.
//! - [`georope`]: rotary 3D encoding, Nyström distance encoding, attention.
//! - [`armodel`]: the autoregressive model, training and sampling.
//! - [`metrics`]: stability, validity, uniqueness and functional-group hits.

pub mod armodel;
pub mod canon;
pub mod georope;
pub mod metrics;
pub mod molio;

pub use canon::{tokenize, BondGraph, CanonicalSequence};
pub use molio::{ElementTable, Molecule, Vec3};
