//! Horizon line / vanishing point observations and the pitch/roll they encode.
//!
//! The vanishing point is the image of the reference camera's forward axis;
//! the horizon is the image of the reference ground plane at infinity (the
//! plane `y = 0` of directions in the reference frame).

use crate::geometry::{
    perturbation_matrix, CameraIntrinsics, ExtrinsicPerturbation, GeometryError, RotationMatrix,
};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Orthogonality tolerance required of `angular_error` inputs.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HorizonError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("recovered angles out of range (pitch {pitch}, roll {roll})")]
    OutOfRange { pitch: f64, roll: f64 },
}

/// `v = intercept_v + slope · (u - cx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonLine {
    pub slope: f64,
    pub intercept_v: f64,
}

impl HorizonLine {
    pub fn v_at(&self, k: &CameraIntrinsics, u: f64) -> f64 {
        self.intercept_v + self.slope * (u - k.cx())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingPoint {
    pub u: f64,
    pub v: f64,
}

/// Recovers pitch from the vanishing point's row and roll from the horizon
/// tilt. Exact inverse of [`horizon_vp_from_extrinsics`]; for square pixels,
/// zero skew and zero pitch the roll reduces to `atan(slope)`.
pub fn extrinsics_from_horizon_vp(
    gp: &HorizonLine,
    vp: &VanishingPoint,
    k: &CameraIntrinsics,
) -> Result<ExtrinsicPerturbation, HorizonError> {
    let pitch = ((k.cy() - vp.v) / k.fy()).atan();
    let roll = (gp.slope * k.fx() * pitch.cos()).atan2(k.fy() - k.skew() * gp.slope);
    if !(pitch.abs() < FRAC_PI_2 && roll.abs() < FRAC_PI_2) {
        return Err(HorizonError::OutOfRange { pitch, roll });
    }
    Ok(ExtrinsicPerturbation::new(pitch, roll)?)
}

pub fn horizon_vp_from_extrinsics(
    p: ExtrinsicPerturbation,
    k: &CameraIntrinsics,
) -> Result<(HorizonLine, VanishingPoint), HorizonError> {
    let a = perturbation_matrix(p);
    let forward = a.matrix() * Vector3::z();
    if !(forward.z > 0.0) {
        return Err(GeometryError::BehindCamera(forward.z).into());
    }
    let vp_h = k.matrix() * forward;
    let vp = VanishingPoint {
        u: vp_h.x / vp_h.z,
        v: vp_h.y / vp_h.z,
    };

    // The ground plane's directions are orthogonal to the rotated vertical;
    // its image line is K⁻ᵀ n.
    let normal = a.matrix() * Vector3::y();
    let line = k.inverse_matrix().transpose() * normal;
    if line.y == 0.0 {
        return Err(HorizonError::OutOfRange {
            pitch: p.pitch(),
            roll: p.roll(),
        });
    }
    let horizon = HorizonLine {
        slope: -line.x / line.y,
        intercept_v: -(line.x * k.cx() + line.z) / line.y,
    };
    Ok((horizon, vp))
}

/// Geodesic angle between two rotations, in degrees.
pub fn angular_error(a_est: &RotationMatrix, a_gt: &RotationMatrix) -> Result<f64, HorizonError> {
    for r in [a_est, a_gt] {
        let defect = crate::geometry::orthogonality_defect(r.matrix());
        if !(defect <= ROTATION_TOLERANCE) {
            return Err(GeometryError::NotARotation(defect).into());
        }
    }
    let cos = ((a_est.matrix().transpose() * a_gt.matrix()).trace() - 1.0) / 2.0;
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Frobenius distance `‖A − Â‖_F` used as the extrinsic regression residual.
pub fn extrinsic_residual(a: &Matrix3<f64>, a_hat: &Matrix3<f64>) -> f64 {
    (a - a_hat).norm()
}

/// Camera tilt relative to a level reference, split off a pose rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseTilt {
    pub tilt: RotationMatrix,
    pub pitch: f64,
    pub roll: f64,
    /// Heading about the reference vertical, radians.
    pub yaw: f64,
}

/// Decomposes a camera-to-reference pose rotation (KITTI odometry convention)
/// as `Rᵀ = R_x(pitch) · R_z(roll) · R_y(-yaw)`, treating the reference frame
/// as level. The returned tilt is in the same convention as
/// [`perturbation_matrix`]: it maps level coordinates into the camera frame.
pub fn tilt_from_pose(camera_to_reference: &RotationMatrix) -> PoseTilt {
    let m = camera_to_reference.matrix().transpose();
    let yaw = (-m[(0, 2)]).atan2(m[(0, 0)]);
    let tilt = m * RotationMatrix::about_y(yaw).matrix();
    let pitch = (-tilt[(1, 2)]).atan2(tilt[(2, 2)]);
    let roll = (-tilt[(0, 1)]).atan2(tilt[(0, 0)]);
    PoseTilt {
        tilt: RotationMatrix::about_x(pitch) * RotationMatrix::about_z(roll),
        pitch,
        roll,
        yaw,
    }
}
