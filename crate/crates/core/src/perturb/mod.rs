//! Seeded pitch/roll disturbance of a labelled dataset: per-frame angle
//! sampling, label transfer into the perturbed camera, and image warping.

mod raster;

pub use raster::{warp_image, RasterError, RasterImage};

use crate::geometry::{
    image_homography, perturbation_matrix, project, transform_box, wrap_angle, CameraIntrinsics,
    ExtrinsicPerturbation, GeometryError, Homography, Point3Camera, RotationMatrix,
};
use crate::kitti::{BBox2D, CalibrationSet, ObjectLabel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// One degree, the default standard deviation of both angles.
pub const DEFAULT_SIGMA: f64 = std::f64::consts::PI / 180.0;
/// Ten degrees, the default clamp on sampled angles.
pub const DEFAULT_CLAMP: f64 = 10.0 * std::f64::consts::PI / 180.0;

/// Used for 2D box clipping when a frame has no image.
pub const KITTI_IMAGE_SIZE: ImageBounds = ImageBounds {
    width: 1242,
    height: 375,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbError {
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Zero-mean Gaussian pitch/roll distribution with a hard clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    sigma_pitch: f64,
    sigma_roll: f64,
    seed: u64,
    clamp: f64,
}

impl PerturbationSpec {
    pub fn new(
        sigma_pitch: f64,
        sigma_roll: f64,
        seed: u64,
        clamp: f64,
    ) -> Result<Self, PerturbError> {
        if !(sigma_pitch >= 0.0
            && sigma_pitch.is_finite()
            && sigma_roll >= 0.0
            && sigma_roll.is_finite())
        {
            return Err(PerturbError::InvalidSpec(
                "sigmas must be finite and non-negative",
            ));
        }
        if !(clamp > 0.0 && clamp < FRAC_PI_2) {
            return Err(PerturbError::InvalidSpec("clamp must lie in (0, pi/2)"));
        }
        Ok(Self {
            sigma_pitch,
            sigma_roll,
            seed,
            clamp,
        })
    }

    pub fn sigma_pitch(&self) -> f64 {
        self.sigma_pitch
    }
    pub fn sigma_roll(&self) -> f64 {
        self.sigma_roll
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn clamp(&self) -> f64 {
        self.clamp
    }
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            sigma_pitch: DEFAULT_SIGMA,
            sigma_roll: DEFAULT_SIGMA,
            seed: 0,
            clamp: DEFAULT_CLAMP,
        }
    }
}

/// Stable 64-bit stream id for `(seed, frame_id)`: FNV-1a over the id, then
/// a SplitMix64 finalizer over the combination.
pub fn frame_stream_seed(seed: u64, frame_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in frame_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h.rotate_left(29);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws the frame's pitch then roll from its own ChaCha8 stream.
pub fn sample_perturbation(spec: &PerturbationSpec, frame_id: &str) -> ExtrinsicPerturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(frame_stream_seed(spec.seed, frame_id));
    let mut draw = |sigma: f64| {
        if sigma == 0.0 {
            return 0.0;
        }
        let normal = Normal::new(0.0, sigma).expect("sigma validated finite and non-negative");
        normal.sample(&mut rng).clamp(-spec.clamp, spec.clamp)
    };
    let pitch = draw(spec.sigma_pitch);
    let roll = draw(spec.sigma_roll);
    ExtrinsicPerturbation::new(pitch, roll).expect("clamp keeps angles below pi/2")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBounds {
    pub width: usize,
    pub height: usize,
}

impl ImageBounds {
    fn clip(&self, b: BBox2D) -> BBox2D {
        let (mx, my) = (
            (self.width as f64 - 1.0).max(0.0),
            (self.height as f64 - 1.0).max(0.0),
        );
        BBox2D {
            left: b.left.clamp(0.0, mx),
            top: b.top.clamp(0.0, my),
            right: b.right.clamp(0.0, mx),
            bottom: b.bottom.clamp(0.0, my),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DropReason {
    BehindCamera,
    OutOfImage,
    InvalidBox,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerturbedLabels {
    pub labels: Vec<ObjectLabel>,
    /// Input index and reason for every object that was dropped.
    pub dropped: Vec<(usize, DropReason)>,
}

fn hull(points: impl Iterator<Item = (f64, f64)>) -> Option<BBox2D> {
    points.fold(None, |acc, (u, v)| {
        Some(match acc {
            None => BBox2D {
                left: u,
                top: v,
                right: u,
                bottom: v,
            },
            Some(b) => BBox2D {
                left: b.left.min(u),
                top: b.top.min(v),
                right: b.right.max(u),
                bottom: b.bottom.max(v),
            },
        })
    })
}

/// Image hull of the box's corners, if every corner is in front of the camera.
fn projected_hull(k: &CameraIntrinsics, corners: &[Point3Camera; 8]) -> Option<BBox2D> {
    let projected: Option<Vec<(f64, f64)>> = corners
        .iter()
        .map(|c| project(k, *c).ok().map(|p| (p.u, p.v)))
        .collect();
    hull(projected?.into_iter())
}

fn observation_angle(rotation_y: f64, center: Point3Camera) -> f64 {
    wrap_angle(rotation_y - center.x.atan2(center.z))
}

/// Transfers labels into the camera rotated by `a`.
///
/// The 3D box goes through [`transform_box`]. The 2D box and the observation
/// angle move by the change in the projected corner hull and in
/// `rotation_y − atan2(x, z)`, so for labels whose 2D box is the hull of their
/// projected 3D box this is exactly a recomputation, and a zero rotation
/// leaves annotations untouched. When corners fall behind the camera the old
/// 2D box corners are mapped through the induced homography instead. Boxes
/// are clipped to `bounds`. DontCare regions pass through unchanged.
pub fn perturb_labels_with_rotation(
    labels: &[ObjectLabel],
    k: &CameraIntrinsics,
    a: &RotationMatrix,
    bounds: Option<ImageBounds>,
) -> PerturbedLabels {
    let homography = image_homography(k, a);
    let mut out = PerturbedLabels::default();
    for (i, label) in labels.iter().enumerate() {
        if label.is_dont_care() {
            out.labels.push(label.clone());
            continue;
        }
        let Ok(original) = label.box3d() else {
            out.dropped.push((i, DropReason::InvalidBox));
            continue;
        };
        let moved = transform_box(a, &original);
        if !(moved.center.z > 0.0) {
            out.dropped.push((i, DropReason::BehindCamera));
            continue;
        }
        let bbox = match (
            projected_hull(k, &original.corners()),
            projected_hull(k, &moved.corners()),
        ) {
            (Some(before), Some(after)) => BBox2D {
                left: label.bbox.left + (after.left - before.left),
                top: label.bbox.top + (after.top - before.top),
                right: label.bbox.right + (after.right - before.right),
                bottom: label.bbox.bottom + (after.bottom - before.bottom),
            },
            _ => {
                let b = &label.bbox;
                let mapped: Option<Vec<(f64, f64)>> = [
                    (b.left, b.top),
                    (b.right, b.top),
                    (b.left, b.bottom),
                    (b.right, b.bottom),
                ]
                .iter()
                .map(|&(u, v)| homography.apply(u, v))
                .collect();
                match mapped.and_then(|m| hull(m.into_iter())) {
                    Some(h) => h,
                    None => {
                        out.dropped.push((i, DropReason::BehindCamera));
                        continue;
                    }
                }
            }
        };
        let bbox = match bounds {
            Some(b) => b.clip(bbox),
            None => bbox,
        };
        if !(bbox.right > bbox.left && bbox.bottom > bbox.top) {
            out.dropped.push((i, DropReason::OutOfImage));
            continue;
        }
        let mut next = label.clone();
        next.set_box3d(&moved);
        next.bbox = bbox;
        next.alpha = wrap_angle(
            label.alpha + observation_angle(moved.yaw, moved.center)
                - observation_angle(original.yaw, original.center),
        );
        out.labels.push(next);
    }
    out
}

pub fn perturb_labels(
    labels: &[ObjectLabel],
    k: &CameraIntrinsics,
    p: ExtrinsicPerturbation,
    bounds: Option<ImageBounds>,
) -> PerturbedLabels {
    perturb_labels_with_rotation(labels, k, &perturbation_matrix(p), bounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFrame {
    pub frame_id: String,
    pub applied: ExtrinsicPerturbation,
    pub labels: Vec<ObjectLabel>,
    pub homography: Homography,
}

/// One input frame of [`simulate_dataset`].
#[derive(Debug, Clone)]
pub struct SimulationInput {
    pub frame_id: String,
    pub labels: Vec<ObjectLabel>,
    pub calib: CalibrationSet,
    pub image: Option<RasterImage>,
}

#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    pub frame: PerturbedFrame,
    pub image: Option<RasterImage>,
    pub dropped: Vec<(usize, DropReason)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameFailure {
    pub frame_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SimulationReport {
    /// Sorted by frame id.
    pub frames: Vec<SimulatedFrame>,
    /// Frames that failed outright or lost objects, sorted by frame id.
    pub failures: Vec<FrameFailure>,
    pub dropped_objects: usize,
}

/// Angles applied to one frame; serialized one JSON object per line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord<'a> {
    pub frame_id: &'a str,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnedSidecarRecord {
    pub frame_id: String,
    pub pitch: f64,
    pub roll: f64,
}

impl SimulationReport {
    pub fn sidecar_jsonl(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            let rec = SidecarRecord {
                frame_id: &f.frame.frame_id,
                pitch: f.frame.applied.pitch(),
                roll: f.frame.applied.roll(),
            };
            s += &serde_json::to_string(&rec).expect("plain struct serializes");
            s.push('\n');
        }
        s
    }
}

pub fn parse_sidecar(text: &str) -> Result<Vec<OwnedSidecarRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

fn simulate_frame(
    input: &SimulationInput,
    spec: &PerturbationSpec,
    default_bounds: ImageBounds,
) -> Result<SimulatedFrame, String> {
    let k = input.calib.intrinsics().map_err(|e| e.to_string())?;
    let applied = sample_perturbation(spec, &input.frame_id);
    let a = perturbation_matrix(applied);
    let bounds = input
        .image
        .as_ref()
        .map_or(default_bounds, |img| ImageBounds {
            width: img.width(),
            height: img.height(),
        });
    let moved = perturb_labels_with_rotation(&input.labels, &k, &a, Some(bounds));
    let homography = image_homography(&k, &a);
    let image = match &input.image {
        Some(img) => Some(warp_image(img, &homography, 0).map_err(|e| e.to_string())?),
        None => None,
    };
    Ok(SimulatedFrame {
        frame: PerturbedFrame {
            frame_id: input.frame_id.clone(),
            applied,
            labels: moved.labels,
            homography,
        },
        image,
        dropped: moved.dropped,
    })
}

/// Runs sample → label transfer → homography → optional warp on every frame.
/// Frames are processed on the current rayon pool; the report is ordered by
/// frame id, so results do not depend on scheduling.
pub fn simulate_dataset(
    frames: &[SimulationInput],
    spec: &PerturbationSpec,
    default_bounds: ImageBounds,
) -> SimulationReport {
    let mut results: Vec<(String, Result<SimulatedFrame, String>)> = frames
        .par_iter()
        .map(|f| (f.frame_id.clone(), simulate_frame(f, spec, default_bounds)))
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut report = SimulationReport::default();
    for (frame_id, result) in results {
        match result {
            Ok(frame) => {
                if !frame.dropped.is_empty() {
                    report.failures.push(FrameFailure {
                        frame_id: frame_id.clone(),
                        reason: format!(
                            "dropped {} object(s): {:?}",
                            frame.dropped.len(),
                            frame.dropped
                        ),
                    });
                }
                report.dropped_objects += frame.dropped.len();
                report.frames.push(frame);
            }
            Err(reason) => report.failures.push(FrameFailure { frame_id, reason }),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3D;
    use crate::kitti::Dimensions;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(700.0, 700.0, 600.0, 180.0).unwrap()
    }

    /// Label whose 2D box is the exact hull of its projected 3D box.
    fn consistent_label(x: f64, y: f64, z: f64, yaw: f64) -> ObjectLabel {
        let b = Box3D::new(Point3Camera::new(x, y, z), 1.5, 1.6, 3.9, yaw).unwrap();
        let bbox = projected_hull(&k(), &b.corners()).unwrap();
        ObjectLabel {
            class_name: "Car".into(),
            truncated: 0.0,
            occluded: 0,
            alpha: observation_angle(yaw, b.center),
            bbox,
            dimensions: Dimensions {
                h: 1.5,
                w: 1.6,
                l: 3.9,
            },
            location: b.center,
            rotation_y: yaw,
            score: None,
        }
    }

    #[test]
    fn zero_sigma_gives_zero_angles() {
        let spec = PerturbationSpec::new(0.0, 0.0, 7, DEFAULT_CLAMP).unwrap();
        for id in ["000000", "000001", "abc"] {
            assert_eq!(sample_perturbation(&spec, id), ExtrinsicPerturbation::ZERO);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_frame_specific() {
        let spec = PerturbationSpec::default();
        assert_eq!(
            sample_perturbation(&spec, "000042"),
            sample_perturbation(&spec, "000042")
        );
        assert_ne!(
            sample_perturbation(&spec, "000042"),
            sample_perturbation(&spec, "000043")
        );
        let other_seed =
            PerturbationSpec::new(DEFAULT_SIGMA, DEFAULT_SIGMA, 1, DEFAULT_CLAMP).unwrap();
        assert_ne!(
            sample_perturbation(&spec, "000042"),
            sample_perturbation(&other_seed, "000042")
        );
    }

    #[test]
    fn clamp_is_applied() {
        let spec = PerturbationSpec::new(1.0, 1.0, 3, 0.05).unwrap();
        for i in 0..200 {
            let p = sample_perturbation(&spec, &i.to_string());
            assert!(p.pitch().abs() <= 0.05 && p.roll().abs() <= 0.05);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(PerturbationSpec::new(-1.0, 0.0, 0, 0.1).is_err());
        assert!(PerturbationSpec::new(0.0, 0.0, 0, FRAC_PI_2).is_err());
        assert!(PerturbationSpec::new(0.0, f64::NAN, 0, 0.1).is_err());
    }

    #[test]
    fn zero_perturbation_keeps_labels() {
        let mut real = crate::kitti::parse_label_file(
            "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n\
             DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n",
        )
        .unwrap();
        real.push(consistent_label(2.0, 1.6, 15.0, 0.3));
        let out = perturb_labels(
            &real,
            &k(),
            ExtrinsicPerturbation::ZERO,
            Some(KITTI_IMAGE_SIZE),
        );
        assert!(out.dropped.is_empty());
        for (a, b) in real.iter().zip(&out.labels) {
            assert_eq!(a.class_name, b.class_name);
            let fields = |l: &ObjectLabel| {
                [
                    l.alpha,
                    l.bbox.left,
                    l.bbox.top,
                    l.bbox.right,
                    l.bbox.bottom,
                    l.location.x,
                    l.location.y,
                    l.location.z,
                    l.rotation_y,
                ]
            };
            for (x, y) in fields(a).iter().zip(fields(b)) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn pitched_box_matches_transform_box() {
        let label = consistent_label(0.0, 1.7, 20.0, 0.0);
        let p = ExtrinsicPerturbation::new(0.1, 0.0).unwrap();
        let out = perturb_labels(std::slice::from_ref(&label), &k(), p, None);
        let expected = transform_box(&perturbation_matrix(p), &label.box3d().unwrap());
        assert_eq!(out.labels[0].location, expected.center);
        // consistent labels get exactly the recomputed hull and alpha
        let hull = projected_hull(&k(), &expected.corners()).unwrap();
        let b = out.labels[0].bbox;
        assert!((b.left - hull.left).abs() < 1e-9 && (b.bottom - hull.bottom).abs() < 1e-9);
        assert!(
            (out.labels[0].alpha - observation_angle(expected.yaw, expected.center)).abs() < 1e-12
        );
    }

    #[test]
    fn behind_camera_objects_are_dropped() {
        // a box 1 m ahead and 3 m below the axis swings behind the camera
        let mut label = consistent_label(0.0, 3.0, 1.0, 0.0);
        label.bbox = BBox2D {
            left: 0.0,
            top: 0.0,
            right: 10.0,
            bottom: 10.0,
        };
        let p = ExtrinsicPerturbation::new(-1.2, 0.0).unwrap();
        let moved = perturbation_matrix(p).apply(label.location);
        assert!(moved.z <= 0.0);
        let keep = consistent_label(0.0, 1.6, 30.0, 0.0);
        let out = perturb_labels(&[label, keep], &k(), p, None);
        assert_eq!(out.dropped, vec![(0, DropReason::BehindCamera)]);
        assert_eq!(out.labels.len(), 1);
    }

    #[test]
    fn simulate_zero_sigma_is_identity() {
        let calib = CalibrationSet::from_intrinsics(&k());
        let frames: Vec<SimulationInput> = (0..3)
            .map(|i| SimulationInput {
                frame_id: format!("{i:06}"),
                labels: vec![consistent_label(i as f64, 1.6, 20.0, 0.1)],
                calib: calib.clone(),
                image: None,
            })
            .collect();
        let spec = PerturbationSpec::new(0.0, 0.0, 0, DEFAULT_CLAMP).unwrap();
        let report = simulate_dataset(&frames, &spec, KITTI_IMAGE_SIZE);
        assert!(report.failures.is_empty());
        for (inp, out) in frames.iter().zip(&report.frames) {
            assert_eq!(out.frame.homography, Homography::identity());
            assert_eq!(inp.labels[0].location, out.frame.labels[0].location);
        }
        assert!(report
            .sidecar_jsonl()
            .starts_with("{\"frame_id\":\"000000\",\"pitch\":0.0,\"roll\":0.0}\n"));
    }

    #[test]
    fn sidecar_round_trip() {
        let calib = CalibrationSet::from_intrinsics(&k());
        let frames = vec![SimulationInput {
            frame_id: "x".into(),
            labels: vec![],
            calib,
            image: None,
        }];
        let report = simulate_dataset(&frames, &PerturbationSpec::default(), KITTI_IMAGE_SIZE);
        let parsed = parse_sidecar(&report.sidecar_jsonl()).unwrap();
        assert_eq!(parsed[0].frame_id, "x");
        assert_eq!(parsed[0].pitch, report.frames[0].frame.applied.pitch());
    }

    proptest::proptest! {
        #[test]
        fn moved_center_projects_through_homography(
            x in -8.0..8.0f64, z in 8.0..60.0f64, yaw in -3.0..3.0f64,
            pitch in -0.1..0.1f64, roll in -0.1..0.1f64,
        ) {
            let label = consistent_label(x, 1.6, z, yaw);
            let p = ExtrinsicPerturbation::new(pitch, roll).unwrap();
            let out = perturb_labels(std::slice::from_ref(&label), &k(), p, None);
            let moved = project(&k(), out.labels[0].location).unwrap();
            let orig = project(&k(), label.location).unwrap();
            let h = image_homography(&k(), &perturbation_matrix(p));
            let (u, v) = h.apply(orig.u, orig.v).unwrap();
            proptest::prop_assert!((moved.u - u).abs() < 1e-6 && (moved.v - v).abs() < 1e-6);
        }
    }
}
