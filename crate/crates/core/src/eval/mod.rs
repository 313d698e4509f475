//! Detection metrics: 2D / BEV / 3D IoU, greedy matching, AP40, AOS and
//! nuScenes-style translation, scale and orientation errors.

mod ap;
mod iou;
mod nuscenes;

pub use ap::{
    average_orientation_similarity, average_precision_40, ApResult, PrCurve, RECALL_POINTS,
};
pub use iou::{
    clip_convex, iou_2d, iou_3d, iou_bev, overlap_of_region, polygon_area, MIN_FOOTPRINT_AREA,
};
pub use nuscenes::{nuscenes_errors, NuScenesErrors, DEFAULT_MATCH_RADIUS};

use crate::geometry::CameraIntrinsics;
use crate::kitti::{difficulty_of, DifficultyBin, ObjectLabel};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Minimum fraction of a detection's 2D area that must fall inside a DontCare
/// region for the detection to be ignored.
pub const DONT_CARE_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("degenerate box (footprint area below {MIN_FOOTPRINT_AREA:e} m²)")]
    DegenerateBox,
    #[error("no ground truth for class {class} at difficulty {bin:?}")]
    NoGroundTruth { class: String, bin: DifficultyBin },
    #[error("no matched detections for class {class}")]
    NoMatches { class: String },
    #[error("IoU threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("frame {frame_id}: detection {index} has no finite score")]
    InvalidScore { frame_id: String, index: usize },
    #[error("no frames to evaluate")]
    NoFrames,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame_id: String,
    pub ground_truth: Vec<ObjectLabel>,
    pub detections: Vec<ObjectLabel>,
    pub intrinsics: Option<CameraIntrinsics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IouKind {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "bev")]
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl IouKind {
    pub fn name(self) -> &'static str {
        match self {
            IouKind::TwoD => "2d",
            IouKind::Bev => "bev",
            IouKind::ThreeD => "3d",
        }
    }

    pub fn iou(self, a: &ObjectLabel, b: &ObjectLabel) -> Result<f64, EvalError> {
        match self {
            IouKind::TwoD => Ok(iou_2d(&a.bbox, &b.bbox)),
            IouKind::Bev => iou_bev(&box_of(a)?, &box_of(b)?),
            IouKind::ThreeD => iou_3d(&box_of(a)?, &box_of(b)?),
        }
    }
}

fn box_of(l: &ObjectLabel) -> Result<crate::geometry::Box3D, EvalError> {
    l.box3d().map_err(|_| EvalError::DegenerateBox)
}

/// Outcome of matching one frame. Indices refer to the frame's
/// `ground_truth` and `detections` vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// `(gt index, det index, IoU)`.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Counted ground truth left unmatched (false negatives).
    pub unmatched_gt: Vec<usize>,
    /// Detections that are false positives.
    pub unmatched_det: Vec<usize>,
    /// Detections absorbed by out-of-bin ground truth or DontCare regions.
    pub ignored_det: Vec<usize>,
}

/// Detection indices of `class`, highest score first; ties keep file order.
pub(crate) fn ranked_detections(f: &DetectionFrame, class: &str) -> Result<Vec<usize>, EvalError> {
    let mut idx = Vec::new();
    for (i, d) in f.detections.iter().enumerate() {
        if d.class_name != class {
            continue;
        }
        match d.score {
            Some(s) if s.is_finite() => idx.push(i),
            _ => {
                return Err(EvalError::InvalidScore {
                    frame_id: f.frame_id.clone(),
                    index: i,
                })
            }
        }
    }
    let score = |i: usize| f.detections[i].score.unwrap_or(f64::NEG_INFINITY);
    idx.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    Ok(idx)
}

/// Greedy score-ordered matching. Each detection, highest score first, claims
/// the unmatched same-class ground truth with the highest IoU at or above
/// `threshold`. Ground truth outside `bin` can absorb detections without
/// producing a true positive; detections mostly inside a DontCare region are
/// ignored as well.
pub fn match_frame(
    f: &DetectionFrame,
    class: &str,
    kind: IouKind,
    threshold: f64,
    bin: DifficultyBin,
) -> Result<MatchResult, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::InvalidThreshold(threshold));
    }
    let gts: Vec<(usize, bool)> = f
        .ground_truth
        .iter()
        .enumerate()
        .filter(|(_, g)| g.class_name == class && !g.is_dont_care())
        .map(|(i, g)| (i, bin.admits(difficulty_of(g))))
        .collect();
    let dont_care: Vec<&ObjectLabel> = f.ground_truth.iter().filter(|g| g.is_dont_care()).collect();
    let mut taken = vec![false; f.ground_truth.len()];
    let mut result = MatchResult::default();

    for d in ranked_detections(f, class)? {
        let det = &f.detections[d];
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        for &(g, counted) in &gts {
            if taken[g] {
                continue;
            }
            let iou = kind.iou(&f.ground_truth[g], det)?;
            if iou < threshold {
                continue;
            }
            let slot = &mut best[usize::from(!counted)];
            if slot.is_none_or(|(_, b)| iou.partial_cmp(&b) == Some(Ordering::Greater)) {
                *slot = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best[0] {
            taken[g] = true;
            result.pairs.push((g, d, iou));
        } else if let Some((g, _)) = best[1] {
            taken[g] = true;
            result.ignored_det.push(d);
        } else if dont_care
            .iter()
            .any(|dc| overlap_of_region(&det.bbox, &dc.bbox) >= DONT_CARE_OVERLAP)
        {
            result.ignored_det.push(d);
        } else {
            result.unmatched_det.push(d);
        }
    }
    result.unmatched_gt = gts
        .iter()
        .filter(|&&(g, counted)| counted && !taken[g])
        .map(|&(g, _)| g)
        .collect();
    Ok(result)
}
