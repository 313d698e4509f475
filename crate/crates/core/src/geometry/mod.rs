//! Pinhole projection, extrinsic perturbation rotations and the maps they
//! induce on image keypoints and 3D boxes.
//!
//! Camera frame: x right, y down, z forward. Image frame: u right, v down.
//!
//! Sign convention for a perturbation (used by every module of this crate):
//! the perturbation rotation `A = R_x(pitch) · R_z(roll)` maps coordinates
//! expressed in the reference (ground-consistent) camera frame into the
//! perturbed camera frame. A positive pitch sends the reference forward axis
//! `(0, 0, 1)` to `(0, -sin p, cos p)`, i.e. the vanishing point of forward
//! rays moves *up* in the image (smaller `v`).

mod multibin;

pub use multibin::{decode_orientation, encode_orientation, OrientationBins, MULTIBIN_LEN};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid perturbation (pitch {pitch}, roll {roll}): angles must be finite and below pi/2 in magnitude")]
    InvalidPerturbation { pitch: f64, roll: f64 },
    #[error("point depth {0} is not positive")]
    NonPositiveDepth(f64),
    #[error("point lands behind the camera after rotation (z = {0})")]
    BehindCamera(f64),
    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),
    #[error("matrix is not a rotation (orthogonality defect {0:e})")]
    NotARotation(f64),
    #[error("invalid box: {0}")]
    InvalidBox(&'static str),
}

/// Pinhole intrinsics `K = [[fx, skew, cx], [0, fy, cy], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, GeometryError> {
        if ![fx, fy, cx, cy, skew].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive",
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn skew(&self) -> f64 {
        self.skew
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Closed-form inverse of [`Self::matrix`].
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let (fx, fy, cx, cy, s) = (self.fx, self.fy, self.cx, self.cy, self.skew);
        Matrix3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * cy - cx * fy) / (fx * fy),
            0.0,
            1.0 / fy,
            -cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Ego pitch and roll relative to the ground-consistent reference frame, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicPerturbation {
    pitch: f64,
    roll: f64,
}

impl ExtrinsicPerturbation {
    pub const ZERO: Self = Self {
        pitch: 0.0,
        roll: 0.0,
    };

    pub fn new(pitch: f64, roll: f64) -> Result<Self, GeometryError> {
        let ok = |a: f64| a.is_finite() && a.abs() < FRAC_PI_2;
        if ok(pitch) && ok(roll) {
            Ok(Self { pitch, roll })
        } else {
            Err(GeometryError::InvalidPerturbation { pitch, roll })
        }
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn roll(&self) -> f64 {
        self.roll
    }
}

/// A proper rotation of the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Accepts `m` when `max |m·mᵀ - I| <= tol` and `det(m) > 0`.
    pub fn try_from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self, GeometryError> {
        let defect = orthogonality_defect(&m);
        if !defect.is_finite() || defect > tol || m.determinant() <= 0.0 {
            return Err(GeometryError::NotARotation(defect));
        }
        Ok(Self(m))
    }

    /// Closest rotation to `m` in the Frobenius norm (the orthogonal polar
    /// factor), for matrices that are rotations up to print precision.
    pub fn nearest(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let svd = m.svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(GeometryError::NotARotation(f64::NAN));
        };
        let r = u * v_t;
        if !(r.determinant() > 0.0) {
            return Err(GeometryError::NotARotation(orthogonality_defect(&m)));
        }
        Ok(Self(r))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, p: Point3Camera) -> Point3Camera {
        Point3Camera::from(self.0 * p.to_vector())
    }

    /// Geodesic angle of the rotation, radians in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

/// Largest absolute entry of `m·mᵀ - I`.
pub fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m * m.transpose() - Matrix3::identity()).abs().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3Camera {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3Camera {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }
}

impl From<Vector3<f64>> for Point3Camera {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2Image {
    pub u: f64,
    pub v: f64,
    pub depth: Option<f64>,
}

impl Point2Image {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v, depth: None }
    }
}

/// Planar projective map, stored with the (3,3) entry scaled to 1 whenever it
/// is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let m = if m[(2, 2)] != 0.0 { m / m[(2, 2)] } else { m };
        let det = m.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(GeometryError::SingularHomography(det.abs()));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .0
            .try_inverse()
            .ok_or(GeometryError::SingularHomography(0.0))?;
        Self::from_matrix(inv)
    }

    /// Maps `(u, v)`; `None` when the point goes to infinity.
    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let q = self.0 * Vector3::new(u, v, 1.0);
        if q.z == 0.0 {
            None
        } else {
            Some((q.x / q.z, q.y / q.z))
        }
    }
}

/// KITTI-style 3D box: `center` is the bottom-center, the box spans
/// `[center.y - h, center.y]` vertically, `l` runs along the heading and
/// `w` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Point3Camera,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(
        center: Point3Camera,
        h: f64,
        w: f64,
        l: f64,
        yaw: f64,
    ) -> Result<Self, GeometryError> {
        if !(h > 0.0 && w > 0.0 && l > 0.0) {
            return Err(GeometryError::InvalidBox("dimensions must be positive"));
        }
        if !(yaw.abs() <= PI) {
            return Err(GeometryError::InvalidBox("yaw outside [-pi, pi]"));
        }
        Ok(Self {
            center,
            h,
            w,
            l,
            yaw,
        })
    }

    /// Footprint corners in the x–z plane, counter-clockwise in (x, z).
    pub fn footprint(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
        local.map(|(a, b)| (self.center.x + c * a + s * b, self.center.z - s * a + c * b))
    }

    /// The eight corners; the first four lie on the bottom face.
    pub fn corners(&self) -> [Point3Camera; 8] {
        let fp = self.footprint();
        let mut out = [Point3Camera::new(0.0, 0.0, 0.0); 8];
        for (i, &(x, z)) in fp.iter().enumerate() {
            out[i] = Point3Camera::new(x, self.center.y, z);
            out[i + 4] = Point3Camera::new(x, self.center.y - self.h, z);
        }
        out
    }

    pub fn volume(&self) -> f64 {
        self.h * self.w * self.l
    }
}

/// Perturbation rotation `R_x(pitch) · R_z(roll)`.
pub fn perturbation_matrix(p: ExtrinsicPerturbation) -> RotationMatrix {
    RotationMatrix::about_x(p.pitch) * RotationMatrix::about_z(p.roll)
}

/// The pitch/roll matrix in its commonly printed form:
///
/// ```text
/// [  cos r          sin r          0     ]
/// [  cos p sin r    cos r cos p    sin p ]
/// [ -sin p sin r   -sin p cos r    cos p ]
/// ```
///
/// This is *not* a rotation: rows one and two have dot product
/// `2 sin r cos r cos p`, and at `(0, pi/4)` the matrix is singular. Kept for
/// comparison only; use [`perturbation_matrix`].
pub fn perturbation_matrix_as_printed(p: ExtrinsicPerturbation) -> Matrix3<f64> {
    let (sp, cp) = p.pitch.sin_cos();
    let (sr, cr) = p.roll.sin_cos();
    Matrix3::new(
        cr,
        sr,
        0.0, //
        cp * sr,
        cr * cp,
        sp, //
        -sp * sr,
        -sp * cr,
        cp,
    )
}

pub fn project(k: &CameraIntrinsics, p: Point3Camera) -> Result<Point2Image, GeometryError> {
    if !(p.z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(p.z));
    }
    Ok(Point2Image {
        u: (k.fx * p.x + k.skew * p.y) / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
        depth: Some(p.z),
    })
}

/// Lifts pixel `p` to the 3D point at depth `z` along its viewing ray.
pub fn backproject(
    k: &CameraIntrinsics,
    p: Point2Image,
    z: f64,
) -> Result<Point3Camera, GeometryError> {
    if !(z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    let y = (p.v - k.cy) * z / k.fy;
    let x = ((p.u - k.cx) * z - k.skew * y) / k.fx;
    Ok(Point3Camera::new(x, y, z))
}

/// Moves a keypoint observed by camera `k_i` at depth `z_i` into camera `k_j`
/// whose frame is rotated by `a`. Returns the new pixel and its depth `z_j`.
pub fn keypoint_transfer(
    k_i: &CameraIntrinsics,
    k_j: &CameraIntrinsics,
    a: &RotationMatrix,
    p: Point2Image,
    z_i: f64,
) -> Result<(Point2Image, f64), GeometryError> {
    let rotated = a.apply(backproject(k_i, p, z_i)?);
    if !(rotated.z > 0.0) {
        return Err(GeometryError::BehindCamera(rotated.z));
    }
    let out = project(k_j, rotated)?;
    Ok((out, rotated.z))
}

/// `M = (z_i / z_j) · K_j · A · K_i⁻¹`, the linear map taking `(u_i, v_i, 1)`
/// to `(u_j, v_j, 1)` for a keypoint whose depths before and after are known.
pub fn keypoint_transfer_matrix(
    k_i: &CameraIntrinsics,
    k_j: &CameraIntrinsics,
    a: &RotationMatrix,
    z_i: f64,
    z_j: f64,
) -> Matrix3<f64> {
    k_j.matrix() * a.matrix() * k_i.inverse_matrix() * (z_i / z_j)
}

/// `H = K · A · K⁻¹`, the image warp induced by rotating the camera about its
/// center. Depth cancels, so this agrees with [`keypoint_transfer`] at any depth.
pub fn image_homography(k: &CameraIntrinsics, a: &RotationMatrix) -> Homography {
    // I + K (A − I) K⁻¹ equals K A K⁻¹ and is exactly I when A is.
    let m =
        Matrix3::identity() + k.matrix() * (a.matrix() - Matrix3::identity()) * k.inverse_matrix();
    // det = 1; m[(2,2)] vanishes only when the principal ray is rotated into
    // the image plane.
    Homography::from_matrix(m).unwrap_or(Homography(m))
}

/// Rotates a box's bottom-center by `a` and re-extracts yaw from the rotated
/// heading `a · (sin yaw, 0, cos yaw)`. Any roll induced on the box is dropped.
pub fn transform_box(a: &RotationMatrix, b: &Box3D) -> Box3D {
    let (s, c) = b.yaw.sin_cos();
    let heading = a.matrix() * Vector3::new(s, 0.0, c);
    Box3D {
        center: a.apply(b.center),
        h: b.h,
        w: b.w,
        l: b.l,
        yaw: heading.x.atan2(heading.z),
    }
}

/// `Â · c`.
pub fn rectify_center(a_hat: &RotationMatrix, c: Point3Camera) -> Point3Camera {
    a_hat.apply(c)
}

/// `Â⁻¹ · c`.
pub fn rectify_center_inverse(a_hat: &RotationMatrix, c: Point3Camera) -> Point3Camera {
    a_hat.inverse().apply(c)
}

/// Wraps an angle into `[-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w < -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kitti_like() -> CameraIntrinsics {
        CameraIntrinsics::new(700.0, 700.0, 600.0, 180.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let r = perturbation_matrix(ExtrinsicPerturbation::ZERO);
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn nearest_snaps_rounded_rotations() {
        let exact = perturbation_matrix(ExtrinsicPerturbation::new(0.2, -0.1).unwrap());
        let rounded = exact.matrix().map(|x| (x * 1e6).round() / 1e6);
        let snapped = RotationMatrix::nearest(rounded).unwrap();
        assert!(orthogonality_defect(snapped.matrix()) < 1e-14);
        assert!((snapped.matrix() - exact.matrix()).abs().max() < 1e-6);
        let mut flip = Matrix3::identity();
        flip[(2, 2)] = -1.0;
        assert!(RotationMatrix::nearest(flip).is_err());
    }

    #[test]
    fn pure_pitch_is_rotation_about_x() {
        let r = perturbation_matrix(ExtrinsicPerturbation::new(PI / 6.0, 0.0).unwrap());
        let h = 3f64.sqrt() / 2.0;
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, h, -0.5, 0.0, 0.5, h);
        assert!((r.matrix() - expected).abs().max() < 1e-15);

        let r = perturbation_matrix(ExtrinsicPerturbation::new(0.0, 0.3).unwrap());
        assert!(
            (r.matrix() - RotationMatrix::about_z(0.3).matrix())
                .abs()
                .max()
                < 1e-15
        );
    }

    #[test]
    fn perturbation_matches_explicit_product() {
        let (p, r) = (0.05f64, 0.02f64);
        // hand-expanded R_x(p) R_z(r)
        let (sp, cp) = p.sin_cos();
        let (sr, cr) = r.sin_cos();
        let expected = Matrix3::new(
            cr,
            -sr,
            0.0, //
            cp * sr,
            cp * cr,
            -sp, //
            sp * sr,
            sp * cr,
            cp,
        );
        let got = perturbation_matrix(ExtrinsicPerturbation::new(p, r).unwrap());
        assert!((got.matrix() - expected).abs().max() < 1e-15);
        assert!(orthogonality_defect(got.matrix()) < 1e-12);
    }

    #[test]
    fn printed_matrix_is_not_a_rotation() {
        assert_eq!(
            perturbation_matrix_as_printed(ExtrinsicPerturbation::ZERO),
            Matrix3::identity()
        );
        let m = perturbation_matrix_as_printed(ExtrinsicPerturbation::new(0.0, PI / 4.0).unwrap());
        let h = 2f64.sqrt() / 2.0;
        let expected = Matrix3::new(h, h, 0.0, h, h, 0.0, 0.0, 0.0, 1.0);
        assert!((m - expected).abs().max() < 1e-15);
        assert!(m.determinant().abs() < 1e-12);

        let m = perturbation_matrix_as_printed(ExtrinsicPerturbation::new(0.05, 0.02).unwrap());
        assert!((m * m.transpose() - Matrix3::identity()).norm() > 1e-3);
    }

    #[test]
    fn invalid_perturbation_rejected() {
        assert!(ExtrinsicPerturbation::new(FRAC_PI_2, 0.0).is_err());
        assert!(ExtrinsicPerturbation::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(CameraIntrinsics::new(0.0, 700.0, 1.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(700.0, -1.0, 1.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(700.0, 700.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let k = kitti_like();
        let p = project(&k, Point3Camera::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (600.0, 180.0, Some(10.0)));
        let p = project(&k, Point3Camera::new(1.0, 0.0, 10.0)).unwrap();
        assert_eq!((p.u, p.v), (670.0, 180.0));
        assert_eq!(
            project(&k, Point3Camera::new(0.0, 0.0, -1.0)),
            Err(GeometryError::NonPositiveDepth(-1.0))
        );
    }

    #[test]
    fn backprojection_examples() {
        let k = kitti_like();
        let c = backproject(&k, Point2Image::new(600.0, 180.0), 10.0).unwrap();
        assert_eq!(c, Point3Camera::new(0.0, 0.0, 10.0));
        let c = backproject(&k, Point2Image::new(670.0, 180.0), 10.0).unwrap();
        assert!(close(c.x, 1.0, 1e-12) && c.y == 0.0 && c.z == 10.0);
        assert!(backproject(&k, Point2Image::new(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn skewed_projection_round_trip() {
        let k = CameraIntrinsics::with_skew(710.0, 690.0, 610.0, 175.0, 3.5).unwrap();
        let p = Point3Camera::new(-2.5, 1.25, 17.0);
        let px = project(&k, p).unwrap();
        let back = backproject(&k, px, 17.0).unwrap();
        assert!((back.to_vector() - p.to_vector()).norm() < 1e-12);
        assert!(
            (k.matrix() * k.inverse_matrix() - Matrix3::identity())
                .abs()
                .max()
                < 1e-15
        );
    }

    #[test]
    fn transfer_identity_and_pitch() {
        let k = kitti_like();
        let p = Point2Image::new(512.0, 200.0);
        let (q, z) = keypoint_transfer(&k, &k, &RotationMatrix::identity(), p, 12.0).unwrap();
        assert!(close(q.u, p.u, 1e-12) && close(q.v, p.v, 1e-12) && z == 12.0);

        let (q, _) = keypoint_transfer(
            &k,
            &k,
            &RotationMatrix::about_x(0.01),
            Point2Image::new(600.0, 180.0),
            10.0,
        )
        .unwrap();
        // rotated point (0, -10 sin 0.01, 10 cos 0.01)
        assert!(close(q.u, 600.0, 1e-12));
        assert!(close(q.v, 180.0 - 700.0 * 0.01f64.tan(), 1e-9));
        assert!(close(q.v, 173.0, 0.01));
    }

    #[test]
    fn transfer_behind_camera() {
        let k = kitti_like();
        // a far-above-axis ray: y/z = -0.5 at z = 10, rotated 1.5 rad about x
        let p = Point2Image::new(600.0, 180.0 - 350.0);
        let a = RotationMatrix::about_x(1.5);
        let rotated = a.apply(backproject(&k, p, 10.0).unwrap());
        assert!(rotated.z <= 0.0);
        assert!(matches!(
            keypoint_transfer(&k, &k, &a, p, 10.0),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn homography_special_cases() {
        let k = kitti_like();
        let h = image_homography(&k, &RotationMatrix::identity());
        assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-12);

        let h = image_homography(&k, &RotationMatrix::about_z(0.7));
        let (u, v) = h.apply(600.0, 180.0).unwrap();
        assert!(close(u, 600.0, 1e-9) && close(v, 180.0, 1e-9));
        assert_eq!(h.matrix()[(2, 2)], 1.0);
    }

    #[test]
    fn transform_box_examples() {
        let b = Box3D::new(Point3Camera::new(1.0, 2.0, 10.0), 1.5, 1.6, 3.9, 0.4).unwrap();
        assert_eq!(transform_box(&RotationMatrix::identity(), &b), b);

        let t = transform_box(&RotationMatrix::about_z(PI), &b);
        assert!(
            close(t.center.x, -1.0, 1e-12) && close(t.center.y, -2.0, 1e-12) && t.center.z == 10.0
        );

        let b = Box3D::new(Point3Camera::new(0.0, 1.7, 20.0), 1.5, 1.6, 3.9, 0.0).unwrap();
        let t = transform_box(&RotationMatrix::about_x(0.1), &b);
        let (s, c) = 0.1f64.sin_cos();
        assert!(close(t.center.y, 1.7 * c - 20.0 * s, 1e-12));
        assert!(close(t.center.z, 1.7 * s + 20.0 * c, 1e-12));
        assert_eq!(t.yaw, 0.0);
        assert_eq!((t.h, t.w, t.l), (b.h, b.w, b.l));
    }

    #[test]
    fn rectify_center_examples() {
        let c = Point3Camera::new(0.0, 0.0, 10.0);
        assert_eq!(rectify_center(&RotationMatrix::identity(), c), c);
        let r = rectify_center(&RotationMatrix::about_x(0.1), c);
        assert!(close(r.y, -0.1f64.sin() * 10.0, 1e-12) && close(r.z, 0.1f64.cos() * 10.0, 1e-12));
        let back = rectify_center_inverse(&RotationMatrix::about_x(0.1), r);
        assert!((back.to_vector() - c.to_vector()).norm() < 1e-12);
    }

    #[test]
    fn box_corners_follow_bottom_center_convention() {
        let b = Box3D::new(Point3Camera::new(0.0, 1.0, 5.0), 2.0, 1.0, 4.0, 0.0).unwrap();
        let cs = b.corners();
        assert!(cs[..4].iter().all(|c| c.y == 1.0));
        assert!(cs[4..].iter().all(|c| c.y == -1.0));
        let xs: Vec<f64> = cs.iter().map(|c| c.x).collect();
        assert_eq!(xs.iter().cloned().fold(f64::MIN, f64::max), 2.0);
        assert!(Box3D::new(b.center, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!(close(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-12));
        assert!(close(wrap_angle(-3.0 * PI / 2.0), PI / 2.0, 1e-12));
        assert_eq!(wrap_angle(0.25), 0.25);
        let w = wrap_angle(PI);
        assert!(w.abs() <= PI);
    }

    #[test]
    fn try_from_matrix_rejects_scaled() {
        let m = Matrix3::identity() * 1.5;
        assert!(RotationMatrix::try_from_matrix(m, 1e-6).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix::try_from_matrix(reflect, 1e-6).is_err());
    }
}
