use nalgebra::{Matrix3, Vector3};

use super::CanonError;
use crate::molio::{Molecule, Vec3};

/// Distance from the x-z / y-z planes below which an atom cannot anchor axis signs, Å.
pub const TAU_PLANE: f64 = 1e-6;
/// Relative tolerance (times the largest |eigenvalue|) for eigenvalue ties.
pub const EIGEN_TIE_RTOL: f64 = 1e-6;
/// Orthogonality / determinant tolerance for frame rotations.
pub const ORTHO_TOL: f64 = 1e-9;

/// Quantum used when comparing distances for anchor selection, Å.
const DISTANCE_QUANTUM: f64 = 1e-8;

/// Arithmetic mean of the coordinates (unweighted).
pub fn centroid(coords: &[Vec3]) -> Vec3 {
    let sum: Vec3 = coords.iter().sum();
    sum / coords.len() as f64
}

/// `sum_i |c_i|^2 I - c_i c_i^T` over already-centred coordinates, unweighted.
pub fn inertia_tensor(centered: &[Vec3]) -> Matrix3<f64> {
    centered.iter().fold(Matrix3::zeros(), |acc, c| {
        acc + Matrix3::identity() * c.norm_squared() - c * c.transpose()
    })
}

/// Eigen-decomposition of a symmetric 3x3 tensor ordered by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFrame {
    pub eigenvalues: Vector3<f64>,
    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub eigenvectors: Matrix3<f64>,
    /// Partition of `{0, 1, 2}` into runs of tied eigenvalues.
    pub degenerate_groups: Vec<Vec<usize>>,
}

impl EigenFrame {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_groups.iter().any(|g| g.len() > 1)
    }
}

pub fn eigen_frame(tensor: &Matrix3<f64>) -> EigenFrame {
    let scale = tensor.amax();
    if scale == 0.0 {
        return EigenFrame {
            eigenvalues: Vector3::zeros(),
            eigenvectors: Matrix3::identity(),
            degenerate_groups: vec![vec![0, 1, 2]],
        };
    }
    let eig = tensor.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = Vector3::from_fn(|i, _| eig.eigenvalues[idx[i]]);
    let eigenvectors = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).normalize(),
        eig.eigenvectors.column(idx[1]).normalize(),
        eig.eigenvectors.column(idx[2]).normalize(),
    ]);
    let tol = EIGEN_TIE_RTOL * eigenvalues.amax();
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..3 {
        if eigenvalues[i - 1] - eigenvalues[i] <= tol {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    EigenFrame {
        eigenvalues,
        eigenvectors,
        degenerate_groups: groups,
    }
}

fn quantized(d: f64) -> i64 {
    (d / DISTANCE_QUANTUM).round() as i64
}

/// The atom that fixes the x/y signs: farthest from the origin among atoms
/// whose projections onto both the x and y axes exceed [`TAU_PLANE`].
pub fn anchor_atom(eigvecs: &Matrix3<f64>, centered: &[Vec3]) -> Option<usize> {
    let (ex, ey) = (eigvecs.column(0), eigvecs.column(1));
    centered
        .iter()
        .enumerate()
        .filter(|(_, c)| ex.dot(c).abs() > TAU_PLANE && ey.dot(c).abs() > TAU_PLANE)
        // farthest first; lowest index on exact ties
        .min_by_key(|(i, c)| (std::cmp::Reverse(quantized(c.norm())), *i))
        .map(|(i, _)| i)
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn with_signs(eigvecs: &Matrix3<f64>, s: [f64; 3]) -> Matrix3<f64> {
    Matrix3::from_columns(&[
        eigvecs.column(0) * s[0],
        eigvecs.column(1) * s[1],
        eigvecs.column(2) * s[2],
    ])
}

/// The four sign assignments of `eigvecs` that give a proper rotation (det = +1).
pub fn right_handed_sign_patterns(eigvecs: &Matrix3<f64>) -> [Matrix3<f64>; 4] {
    let det = sign(eigvecs.determinant());
    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .map(|(sx, sy)| with_signs(eigvecs, [sx, sy, sx * sy * det]))
}

/// Flips the x/y axes so the anchor atom projects into the first quadrant of
/// the x-y plane, then sets the z sign so the result is a proper rotation.
pub fn fix_axis_signs(eigvecs: &Matrix3<f64>, centered: &[Vec3]) -> Result<Matrix3<f64>, CanonError> {
    let anchor = anchor_atom(eigvecs, centered).ok_or(CanonError::NoValidAnchor)?;
    let c = centered[anchor];
    let sx = sign(eigvecs.column(0).dot(&c));
    let sy = sign(eigvecs.column(1).dot(&c));
    let sz = sx * sy * sign(eigvecs.determinant());
    Ok(with_signs(eigvecs, [sx, sy, sz]))
}

/// What the pose canonicalization had to fall back on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoseFlags {
    /// At least two eigenvalues tied.
    pub degenerate: bool,
    /// All three tied; axes came from directional anchors.
    pub spherical: bool,
    /// No atom off both the x-z and y-z planes.
    pub anchor_fallback: bool,
}

impl PoseFlags {
    pub fn any(&self) -> bool {
        self.degenerate || self.spherical || self.anchor_fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertialFrame {
    /// Centroid `c̄` of the input coordinates.
    pub center: Vec3,
    /// Proper rotation with the canonical axes as columns (world coordinates);
    /// posed coordinates are `rotation^T (c - center)`.
    pub rotation: Matrix3<f64>,
    pub eigenvalues: Vector3<f64>,
    pub degenerate_groups: Vec<Vec<usize>>,
    /// Index of the anchor atom when the regular sign rule applied.
    pub anchor: Option<usize>,
    pub flags: PoseFlags,
}

/// Atom order used by the fallbacks: heavier first, then farther from the origin.
fn directional_order(types: &[u8], centered: &[Vec3]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..centered.len()).collect();
    order.sort_by_key(|&i| {
        (
            std::cmp::Reverse(types[i]),
            std::cmp::Reverse(quantized(centered[i].norm())),
            i,
        )
    });
    order
}

fn any_perpendicular(x: &Vec3) -> Vec3 {
    let k = x.iamin();
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    (e - x * x.dot(&e)).normalize()
}

/// Axes for a spherical top from the first two non-collinear atoms in
/// [`directional_order`].
fn spherical_axes(types: &[u8], centered: &[Vec3]) -> Matrix3<f64> {
    let order = directional_order(types, centered);
    let mut off_origin = order.into_iter().filter(|&i| centered[i].norm() > TAU_PLANE);
    let Some(first) = off_origin.next() else {
        return Matrix3::identity();
    };
    let x = centered[first].normalize();
    let y = off_origin
        .map(|i| centered[i] - x * x.dot(&centered[i]))
        .find(|p| p.norm() > TAU_PLANE)
        .map(|p| p.normalize())
        .unwrap_or_else(|| any_perpendicular(&x));
    Matrix3::from_columns(&[x, y, x.cross(&y)])
}

/// Rebuilds a two-fold degenerate subspace so its first axis points at the
/// farthest atom with a non-negligible in-plane component.
fn align_degenerate_pair(
    eigvecs: &mut Matrix3<f64>,
    pair: [usize; 2],
    types: &[u8],
    centered: &[Vec3],
) {
    let other = 3 - pair[0] - pair[1];
    let normal: Vec3 = eigvecs.column(other).into();
    let mut order: Vec<usize> = (0..centered.len()).collect();
    order.sort_by_key(|&i| {
        (
            std::cmp::Reverse(quantized(centered[i].norm())),
            std::cmp::Reverse(types[i]),
            i,
        )
    });
    let Some(u) = order
        .into_iter()
        .map(|i| centered[i] - normal * normal.dot(&centered[i]))
        .find(|p| p.norm() > TAU_PLANE)
        .map(|p| p.normalize())
    else {
        return;
    };
    let v = normal.cross(&u);
    eigvecs.set_column(pair[0], &u);
    eigvecs.set_column(pair[1], &v);
}

/// Sign choice when no atom can anchor the x/y quadrant: each axis points
/// towards the first atom (in [`directional_order`]) with a non-zero
/// projection on it; an unconstrained axis absorbs the handedness fix.
fn fallback_signs(eigvecs: &Matrix3<f64>, types: &[u8], centered: &[Vec3]) -> Matrix3<f64> {
    let order = directional_order(types, centered);
    let prefs: [Option<f64>; 3] = std::array::from_fn(|k| {
        let axis = eigvecs.column(k);
        order
            .iter()
            .map(|&i| axis.dot(&centered[i]))
            .find(|p| p.abs() > TAU_PLANE)
            .map(sign)
    });
    let mut signs = prefs.map(|p| p.unwrap_or(1.0));
    if sign(eigvecs.determinant()) * signs.iter().product::<f64>() < 0.0 {
        let flip = (0..3).find(|&k| prefs[k].is_none()).unwrap_or(2);
        signs[flip] = -signs[flip];
    }
    with_signs(eigvecs, signs)
}

/// Aligns a molecule to its inertial frame with deterministic axis signs.
pub fn canonical_pose(mol: &Molecule) -> (Molecule, InertialFrame) {
    let center = centroid(mol.coords());
    let centered: Vec<Vec3> = mol.coords().iter().map(|c| c - center).collect();
    let eig = eigen_frame(&inertia_tensor(&centered));
    let types = mol.atom_types();
    let mut flags = PoseFlags {
        degenerate: eig.is_degenerate(),
        ..Default::default()
    };
    let mut anchor = None;
    let rotation = if eig.degenerate_groups.len() == 1 {
        flags.spherical = true;
        spherical_axes(types, &centered)
    } else {
        let mut axes = eig.eigenvectors;
        for g in eig.degenerate_groups.iter().filter(|g| g.len() == 2) {
            align_degenerate_pair(&mut axes, [g[0], g[1]], types, &centered);
        }
        match fix_axis_signs(&axes, &centered) {
            Ok(r) => {
                anchor = anchor_atom(&axes, &centered);
                r
            }
            Err(CanonError::NoValidAnchor) => {
                flags.anchor_fallback = true;
                fallback_signs(&axes, types, &centered)
            }
        }
    };
    let posed_coords = centered.iter().map(|c| rotation.tr_mul(c)).collect();
    let posed = mol
        .with_coords(posed_coords)
        .expect("rotation keeps coordinates finite");
    let frame = InertialFrame {
        center,
        rotation,
        eigenvalues: eig.eigenvalues,
        degenerate_groups: eig.degenerate_groups,
        anchor,
        flags,
    };
    (posed, frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        Rotation3::new(axis.normalize() * angle).into_inner()
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&[Vec3::x(), -Vec3::x()]), Vec3::zeros());
        assert_eq!(centroid(&[Vec3::repeat(2.0)]), Vec3::repeat(2.0));
        let c = centroid(&[Vec3::zeros(), Vec3::x(), Vec3::y()]);
        assert!((c - Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inertia_examples() {
        let t = inertia_tensor(&[Vec3::x(), -Vec3::x()]);
        assert_eq!(t, Matrix3::from_diagonal(&Vector3::new(0.0, 2.0, 2.0)));
        assert_eq!(inertia_tensor(&[Vec3::zeros()]), Matrix3::zeros());
    }

    #[test]
    fn inertia_matches_elementwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..6)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let t = inertia_tensor(&pts);
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for p in &pts {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    s += (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) * delta - p[a] * p[b];
                }
                assert!((t[(a, b)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_ties_and_order() {
        let e = eigen_frame(&Matrix3::from_diagonal(&Vector3::new(0.0, 2.0, 2.0)));
        assert_eq!(e.eigenvalues, Vector3::new(2.0, 2.0, 0.0));
        assert_eq!(e.degenerate_groups, vec![vec![0, 1], vec![2]]);
        let e = eigen_frame(&Matrix3::from_diagonal(&Vector3::new(1.0, 3.0, 2.0)));
        assert_eq!(e.eigenvalues, Vector3::new(3.0, 2.0, 1.0));
        assert!(!e.is_degenerate());
        let z = eigen_frame(&Matrix3::zeros());
        assert_eq!(z.eigenvectors, Matrix3::identity());
        assert_eq!(z.degenerate_groups, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn eigen_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let t = q * Matrix3::from_diagonal(&Vector3::new(3.0, 2.0, 1.0)) * q.transpose();
            let e = eigen_frame(&t);
            assert!((e.eigenvalues - Vector3::new(3.0, 2.0, 1.0)).amax() < 1e-9);
            assert!((e.eigenvectors.transpose() * e.eigenvectors - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn sign_fixing_examples() {
        let eye = Matrix3::identity();
        assert_eq!(fix_axis_signs(&eye, &[Vec3::repeat(1.0)]).unwrap(), eye);
        // Flipping x and y already gives det +1, so z keeps its sign.
        let r = fix_axis_signs(&eye, &[Vec3::new(-1.0, -1.0, 1.0)]).unwrap();
        assert_eq!(r, Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)));
        assert_eq!(r.tr_mul(&Vec3::new(-1.0, -1.0, 1.0)), Vec3::repeat(1.0));
        assert_eq!(
            fix_axis_signs(&eye, &[Vec3::z(), Vec3::x()]),
            Err(CanonError::NoValidAnchor)
        );
    }

    #[test]
    fn exactly_one_pattern_in_first_quadrant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let axes = random_rotation(&mut rng);
            let pts: Vec<Vec3> = (0..5)
                .map(|_| Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let a = anchor_atom(&axes, &pts).unwrap();
            let passing = right_handed_sign_patterns(&axes)
                .iter()
                .filter(|r| {
                    assert!((r.determinant() - 1.0).abs() < ORTHO_TOL);
                    let p = r.tr_mul(&pts[a]);
                    p.x > 0.0 && p.y > 0.0
                })
                .count();
            assert_eq!(passing, 1);
        }
    }

    #[test]
    fn pose_is_idempotent_and_proper() {
        let mol = Molecule::new(
            vec![6, 8, 1, 7, 1],
            vec![
                Vec3::new(0.1, 0.2, -0.3),
                Vec3::new(1.3, 0.1, 0.2),
                Vec3::new(-0.5, 0.9, 0.1),
                Vec3::new(-0.4, -1.1, 0.6),
                Vec3::new(0.2, 0.3, 1.4),
            ],
        )
        .unwrap();
        let (posed, frame) = canonical_pose(&mol);
        assert!(!frame.flags.any());
        assert!((frame.rotation.determinant() - 1.0).abs() < ORTHO_TOL);
        assert!(centroid(posed.coords()).norm() < 1e-9);
        let anchor = posed.coords()[frame.anchor.unwrap()];
        assert!(anchor.x >= -TAU_PLANE && anchor.y >= -TAU_PLANE);
        let (again, _) = canonical_pose(&posed);
        for (a, b) in again.coords().iter().zip(posed.coords()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn single_atom_pose() {
        let mol = Molecule::new(vec![6], vec![Vec3::new(3.0, -1.0, 2.0)]).unwrap();
        let (posed, frame) = canonical_pose(&mol);
        assert_eq!(posed.coords()[0], Vec3::zeros());
        assert_eq!(frame.rotation, Matrix3::identity());
    }

    #[test]
    fn linear_molecule_flags_fallback() {
        let mol = Molecule::new(
            vec![6, 8, 8],
            vec![Vec3::zeros(), Vec3::new(0.0, 1.16, 0.0), Vec3::new(0.0, -1.16, 0.0)],
        )
        .unwrap();
        let (posed, frame) = canonical_pose(&mol);
        assert!(frame.flags.degenerate && frame.flags.anchor_fallback);
        assert!(frame.eigenvalues[2].abs() < 1e-12);
        assert!((frame.rotation.determinant() - 1.0).abs() < ORTHO_TOL);
        // the molecular axis is the zero-eigenvalue axis
        assert!((posed.coords()[1].z.abs() - 1.16).abs() < 1e-12);
    }
}
