//! Camera-extrinsic perturbation toolkit for monocular 3D detection.
//!
//! - [`geometry`]: pinhole projection, pitch/roll rotations, keypoint and box transfer
//! - [`horizon`]: horizon line / vanishing point ↔ pitch/roll, angular error
//! - [`kitti`]: KITTI label, calibration and odometry pose files
//! - [`perturb`]: seeded perturbation sampling, label transfer, image warping
//! - [`eval`]: rotated IoU, AP40, AOS and nuScenes-style errors
//! - [`loss`]: Gram matrices, content/style losses and their gradients

// negated float comparisons below are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod geometry;
pub mod horizon;
pub mod kitti;
pub mod loss;
pub mod perturb;

pub use eval::{DetectionFrame, IouKind};
pub use geometry::{
    Box3D, CameraIntrinsics, ExtrinsicPerturbation, GeometryError, Homography, Point2Image,
    Point3Camera, RotationMatrix,
};
pub use kitti::{BBox2D, DifficultyBin, ObjectLabel};
pub use loss::FeatureTensor;
pub use perturb::{PerturbationSpec, RasterImage};
