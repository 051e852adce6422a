//! Rigid camera pose and closed-form pose recovery.
//!
//! Given a decided association set, the camera pose is recovered by
//! least-squares alignment of the associated object positions: a full 6-DoF
//! orthogonal-Procrustes solve (SVD with reflection guard), or a yaw-only
//! solve for the known-ground-plane case where rotation is constrained to
//! the vertical axis.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::assoc::AssociationSet;
use crate::error::{Error, Result};
use crate::map::ObjectMap;

/// Tolerance for pose orthonormality checks and degeneracy detection.
pub const POSE_TOL: f64 = 1e-9;

/// Rigid transform aligning the local frame to the global frame:
/// `p_global = R * p_local + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, rejecting rotation matrices that are not proper
    /// and orthonormal within `POSE_TOL`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation * rotation.transpose();
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        let det_err = (rotation.determinant() - 1.0).abs();
        if ortho_err > POSE_TOL || det_err > POSE_TOL {
            return Err(Error::InvalidParameter {
                what: "rotation",
                why: format!(
                    "matrix is not a proper rotation (orthonormality error {ortho_err:.3e}, det error {det_err:.3e})"
                ),
            });
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "translation",
                why: "components must be finite".into(),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle_rad: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle_rad);
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Rotation about the vertical (z) axis plus a translation.
    pub fn from_yaw(yaw_rad: f64, translation: Vector3<f64>) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw_rad, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.transpose();
        Self {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// Composition: `(self.compose(other)).apply(p) == self.apply(other.apply(p))`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = [
            [self.rotation[(0, 0)], self.rotation[(0, 1)], self.rotation[(0, 2)]],
            [self.rotation[(1, 0)], self.rotation[(1, 1)], self.rotation[(1, 2)]],
            [self.rotation[(2, 0)], self.rotation[(2, 1)], self.rotation[(2, 2)]],
        ];
        PoseRepr {
            rotation: rows,
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let rotation = Matrix3::from_fn(|r, c| repr.rotation[r][c]);
        let translation = Vector3::from_column_slice(&repr.translation);
        Pose::new(rotation, translation).map_err(serde::de::Error::custom)
    }
}

/// Wire format: row-major rotation plus translation.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

/// Which rotation parametrization the alignment solves for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AlignmentMode {
    /// Unconstrained rotation; needs at least 3 non-collinear correspondences.
    #[default]
    #[serde(rename = "full_6dof")]
    Full6Dof,
    /// Rotation about the vertical axis only (known ground plane); needs at
    /// least 2 correspondences with distinct horizontal positions.
    #[serde(rename = "yaw_only")]
    YawOnly,
}

impl AlignmentMode {
    pub fn min_correspondences(self) -> usize {
        match self {
            AlignmentMode::Full6Dof => 3,
            AlignmentMode::YawOnly => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            AlignmentMode::Full6Dof => "full_6dof",
            AlignmentMode::YawOnly => "yaw_only",
        }
    }
}

impl std::str::FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full_6dof" => Ok(AlignmentMode::Full6Dof),
            "yaw_only" => Ok(AlignmentMode::YawOnly),
            other => Err(format!(
                "unknown alignment mode '{other}' (expected full_6dof or yaw_only)"
            )),
        }
    }
}

impl std::fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of aligning an association set's object positions.
#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// Root-mean-square residual over the correspondences used, meters.
    pub rms_residual: f64,
    pub correspondences_used: usize,
    pub mode: AlignmentMode,
}

/// Recovers the local-to-global rigid transform that minimizes
/// `sum ||R * m_local + t - m_global||^2` over the set's correspondences.
pub fn estimate_pose(
    assoc: &AssociationSet,
    global: &ObjectMap,
    local: &ObjectMap,
    mode: AlignmentMode,
) -> Result<PoseEstimate> {
    let mut global_pts = Vec::with_capacity(assoc.len());
    let mut local_pts = Vec::with_capacity(assoc.len());
    for pair in assoc.pairs() {
        let g = global.get(pair.alpha).ok_or(Error::InconsistentPool {
            id: pair.alpha,
            side: "global",
        })?;
        let l = local.get(pair.beta).ok_or(Error::InconsistentPool {
            id: pair.beta,
            side: "local",
        })?;
        global_pts.push(g.position);
        local_pts.push(l.position);
    }

    let need = mode.min_correspondences();
    if local_pts.len() < need {
        return Err(Error::InsufficientCorrespondences {
            mode: mode.name(),
            got: local_pts.len(),
            need,
        });
    }

    let pose = match mode {
        AlignmentMode::Full6Dof => solve_full(&global_pts, &local_pts)?,
        AlignmentMode::YawOnly => solve_yaw(&global_pts, &local_pts)?,
    };

    let n = local_pts.len();
    let ssr: f64 = local_pts
        .iter()
        .zip(&global_pts)
        .map(|(b, a)| (pose.apply(b) - a).norm_squared())
        .sum();
    Ok(PoseEstimate {
        pose,
        rms_residual: (ssr / n as f64).sqrt(),
        correspondences_used: n,
        mode,
    })
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

/// Kabsch alignment with reflection guard.
fn solve_full(global_pts: &[Vector3<f64>], local_pts: &[Vector3<f64>]) -> Result<Pose> {
    let a_bar = centroid(global_pts);
    let b_bar = centroid(local_pts);

    // Cross-covariance H = sum (b - b_bar)(a - a_bar)^T.
    let mut h = Matrix3::zeros();
    for (a, b) in global_pts.iter().zip(local_pts) {
        h += (b - b_bar) * (a - a_bar).transpose();
    }

    // Local spread: rank < 2 means the points are collinear or coincident
    // and the rotation is not uniquely determined.
    let mut spread = Matrix3::zeros();
    for b in local_pts {
        let c = b - b_bar;
        spread += c * c.transpose();
    }
    let spread_sv = spread.svd(false, false).singular_values;
    if spread_sv[1].sqrt() <= POSE_TOL {
        return Err(Error::DegenerateConfiguration(
            "local positions are collinear or coincident",
        ));
    }

    let svd = h.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateConfiguration("SVD failed"))?;
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration("SVD failed"))?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = a_bar - rotation * b_bar;
    Pose::new(rotation, translation)
}

/// Yaw-constrained alignment: planar Procrustes in x/y, mean offset in z.
fn solve_yaw(global_pts: &[Vector3<f64>], local_pts: &[Vector3<f64>]) -> Result<Pose> {
    let a_bar = centroid(global_pts);
    let b_bar = centroid(local_pts);

    let horizontal_spread = local_pts
        .iter()
        .map(|b| ((b - b_bar).xy()).norm())
        .fold(0.0_f64, f64::max);
    if horizontal_spread <= POSE_TOL {
        return Err(Error::DegenerateConfiguration(
            "local horizontal positions coincide",
        ));
    }

    let mut dot = 0.0; // sum of b~ . a~ in the plane
    let mut cross = 0.0; // sum of b~ x a~ (z component)
    for (a, b) in global_pts.iter().zip(local_pts) {
        let ac = a - a_bar;
        let bc = b - b_bar;
        dot += bc.x * ac.x + bc.y * ac.y;
        cross += bc.x * ac.y - bc.y * ac.x;
    }
    let yaw = cross.atan2(dot);
    let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).into_inner();
    let translation = a_bar - rotation * b_bar;
    Pose::new(rotation, translation)
}

/// Geodesic rotation error in degrees and Euclidean translation error in
/// meters between an estimate and the ground truth.
pub fn pose_error(estimate: &Pose, ground_truth: &Pose) -> (f64, f64) {
    let rel = estimate.rotation() * ground_truth.rotation().transpose();
    // atan2 of the rotation's sine (from the skew part) and cosine (from the
    // trace); unlike plain acos this stays accurate for tiny angles.
    let sin_angle = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    )
    .norm()
        / 2.0;
    let cos_angle = (rel.trace() - 1.0) / 2.0;
    let rot_deg = sin_angle.atan2(cos_angle).to_degrees();
    let trans_m = (estimate.translation() - ground_truth.translation()).norm();
    (rot_deg, trans_m)
}
