//! Canonical tokenization: inertial-frame pose alignment followed by a
//! permutation-invariant atom order.

mod bonds;
mod frame;
mod rank;

pub use bonds::{infer_bonds, BondGraph};
pub use frame::{
    anchor_atom, canonical_pose, centroid, eigen_frame, fix_axis_signs, inertia_tensor,
    right_handed_sign_patterns, EigenFrame, InertialFrame, PoseFlags, EIGEN_TIE_RTOL, ORTHO_TOL,
    TAU_PLANE,
};
pub use rank::{canonical_rank, graph_invariant_classes, CanonicalRank, TIE_COORD_QUANTUM};

use thiserror::Error;

use crate::molio::{ElementTable, Molecule, Vec3};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CanonError {
    #[error("no atom lies off both the x-z and y-z planes")]
    NoValidAnchor,
}

/// One atom-based token: nuclear charge plus canonical-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Token {
    pub charge: u8,
    pub coord: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSequence {
    pub tokens: Vec<Token>,
    pub frame: InertialFrame,
    /// `order[k]` is the input index of token `k`.
    pub order: Vec<usize>,
    pub rank: CanonicalRank,
}

impl CanonicalSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn flags(&self) -> PoseFlags {
        self.frame.flags
    }

    pub fn charges(&self) -> Vec<u8> {
        self.tokens.iter().map(|t| t.charge).collect()
    }

    pub fn coords(&self) -> Vec<Vec3> {
        self.tokens.iter().map(|t| t.coord).collect()
    }

    /// The tokens as a molecule in canonical pose and order.
    pub fn to_molecule(&self, class_id: Option<u32>) -> Molecule {
        Molecule::with_class(self.charges(), self.coords(), class_id)
            .expect("tokens come from a valid molecule")
    }
}

/// Pose alignment, bond inference on the posed molecule, canonical ranking.
pub fn tokenize(mol: &Molecule) -> CanonicalSequence {
    tokenize_with(mol, ElementTable::standard())
}

pub fn tokenize_with(mol: &Molecule, table: &ElementTable) -> CanonicalSequence {
    let (posed, frame) = canonical_pose(mol);
    let graph = infer_bonds(&posed, table);
    let rank = canonical_rank(&graph, &posed);
    let order = rank.order();
    let tokens = order
        .iter()
        .map(|&i| Token {
            charge: posed.atom_types()[i],
            coord: posed.coords()[i],
        })
        .collect();
    CanonicalSequence {
        tokens,
        frame,
        order,
        rank,
    }
}
