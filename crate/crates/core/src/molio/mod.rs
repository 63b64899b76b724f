//! Molecular data model, element constants, XYZ I/O and the synthetic
//! template dataset.

mod element;
mod synth;
mod xyz;

pub use element::{BondThresholds, Element, ElementTable};
pub use synth::{synth_dataset, templates, Template, JITTER};
pub use xyz::{parse_xyz, parse_xyz_frames, write_xyz};

use thiserror::Error;

/// 3-vector in Ångström.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Uniformly distributed proper rotation (normalised quaternion from a
/// rejection-sampled point in the unit 4-ball).
pub fn random_rotation<R: rand::Rng + ?Sized>(rng: &mut R) -> nalgebra::Matrix3<f64> {
    loop {
        let q = nalgebra::Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q / n));
            return nalgebra::Rotation3::from(q).into_inner();
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MolError {
    #[error("molecule has no atoms")]
    Empty,
    #[error("{types} atom types but {coords} coordinates")]
    LengthMismatch { types: usize, coords: usize },
    #[error("atom {atom} has a non-finite coordinate")]
    NonFinite { atom: usize },
    #[error("nuclear charge {0} is not in the element table")]
    UnknownCharge(u8),
    #[error("line {line}: unknown element symbol {symbol:?}")]
    UnknownSymbol { line: usize, symbol: String },
    #[error("header declares {expected} atoms but {found} atom lines follow")]
    CountMismatch { expected: usize, found: usize },
    #[error("line 1: invalid atom count {0:?}")]
    BadCount(String),
    #[error("line {line}: invalid coordinate {value:?}")]
    BadCoordinate { line: usize, value: String },
    #[error("line {line}: expected `symbol x y z`")]
    MissingFields { line: usize },
    #[error("element table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

/// A molecule as a point cloud: nuclear charges plus Cartesian coordinates.
///
/// Invariants are checked on construction: at least one atom, equal lengths,
/// finite coordinates and charges known to the standard element table.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atom_types: Vec<u8>,
    coords: Vec<Vec3>,
    class_id: Option<u32>,
}

impl Molecule {
    pub fn new(atom_types: Vec<u8>, coords: Vec<Vec3>) -> Result<Self, MolError> {
        Self::with_class(atom_types, coords, None)
    }

    pub fn with_class(
        atom_types: Vec<u8>,
        coords: Vec<Vec3>,
        class_id: Option<u32>,
    ) -> Result<Self, MolError> {
        if atom_types.is_empty() {
            return Err(MolError::Empty);
        }
        if atom_types.len() != coords.len() {
            return Err(MolError::LengthMismatch {
                types: atom_types.len(),
                coords: coords.len(),
            });
        }
        if let Some(atom) = coords.iter().position(|c| !c.iter().all(|v| v.is_finite())) {
            return Err(MolError::NonFinite { atom });
        }
        let table = ElementTable::standard();
        if let Some(&z) = atom_types.iter().find(|&&z| table.by_charge(z).is_none()) {
            return Err(MolError::UnknownCharge(z));
        }
        Ok(Self {
            atom_types,
            coords,
            class_id,
        })
    }

    pub fn atom_types(&self) -> &[u8] {
        &self.atom_types
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn class_id(&self) -> Option<u32> {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.atom_types.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.atom_types.is_empty()
    }

    pub fn set_class_id(&mut self, class_id: Option<u32>) {
        self.class_id = class_id;
    }

    /// Same atoms with new coordinates.
    pub fn with_coords(&self, coords: Vec<Vec3>) -> Result<Self, MolError> {
        Self::with_class(self.atom_types.clone(), coords, self.class_id)
    }

    /// Reorders atoms so that atom `k` of the result is atom `order[k]` of `self`.
    ///
    /// Panics if `order` is not a permutation of `0..len`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len(), "permutation length");
        let mut seen = vec![false; self.len()];
        for &i in order {
            assert!(!std::mem::replace(&mut seen[i], true), "not a permutation");
        }
        Self {
            atom_types: order.iter().map(|&i| self.atom_types[i]).collect(),
            coords: order.iter().map(|&i| self.coords[i]).collect(),
            class_id: self.class_id,
        }
    }

    /// Applies `c -> rotation * c + translation` to every atom.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: &Vec3) -> Self {
        Self {
            atom_types: self.atom_types.clone(),
            coords: self.coords.iter().map(|c| rotation * c + translation).collect(),
            class_id: self.class_id,
        }
    }
}
