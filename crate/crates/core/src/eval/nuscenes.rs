use super::{ranked_detections, DetectionFrame, EvalError};
use crate::geometry::wrap_angle;
use serde::Serialize;

/// Center-distance matching radius in meters.
pub const DEFAULT_MATCH_RADIUS: f64 = 2.0;

/// Mean true-positive errors over center-distance matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NuScenesErrors {
    /// Translation error, meters (BEV center distance).
    pub ate: f64,
    /// Scale error, `1 - IoU` of the boxes after aligning centers and yaw.
    pub ase: f64,
    /// Orientation error, radians in `[0, pi]`.
    pub aoe: f64,
    pub matches: usize,
}

fn aligned_iou(a: &crate::kitti::Dimensions, b: &crate::kitti::Dimensions) -> f64 {
    let inter = a.h.min(b.h) * a.w.min(b.w) * a.l.min(b.l);
    inter / (a.h * a.w * a.l + b.h * b.w * b.l - inter)
}

/// Each detection, highest score first, claims the nearest unmatched
/// same-class ground truth whose BEV center lies within `match_radius`.
pub fn nuscenes_errors(
    frames: &[DetectionFrame],
    class: &str,
    match_radius: f64,
) -> Result<NuScenesErrors, EvalError> {
    let mut sums = [0.0f64; 3];
    let mut matches = 0usize;
    for f in frames {
        let mut taken = vec![false; f.ground_truth.len()];
        for d in ranked_detections(f, class)? {
            let det = &f.detections[d];
            let nearest = f
                .ground_truth
                .iter()
                .enumerate()
                .filter(|(g, gt)| !taken[*g] && gt.class_name == class && !gt.is_dont_care())
                .map(|(g, gt)| {
                    let dx = gt.location.x - det.location.x;
                    let dz = gt.location.z - det.location.z;
                    (g, dx.hypot(dz))
                })
                .filter(|&(_, dist)| dist <= match_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((g, dist)) = nearest {
                taken[g] = true;
                let gt = &f.ground_truth[g];
                sums[0] += dist;
                sums[1] += 1.0 - aligned_iou(&gt.dimensions, &det.dimensions);
                sums[2] += wrap_angle(det.rotation_y - gt.rotation_y).abs();
                matches += 1;
            }
        }
    }
    if matches == 0 {
        return Err(EvalError::NoMatches {
            class: class.to_string(),
        });
    }
    let n = matches as f64;
    Ok(NuScenesErrors {
        ate: sums[0] / n,
        ase: sums[1] / n,
        aoe: sums[2] / n,
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::kitti::Dimensions;

    #[test]
    fn identical_boxes() {
        let frames = vec![frame(vec![car(0.0, None)], vec![car(0.0, Some(0.5))])];
        let e = nuscenes_errors(&frames, "Car", DEFAULT_MATCH_RADIUS).unwrap();
        assert_eq!((e.ate, e.ase, e.aoe, e.matches), (0.0, 0.0, 0.0, 1));
    }

    #[test]
    fn shifted_detection() {
        let mut det = car(0.0, Some(0.5));
        det.location.x += 1.0;
        let e = nuscenes_errors(&[frame(vec![car(0.0, None)], vec![det])], "Car", 2.0).unwrap();
        assert_eq!((e.ate, e.ase, e.aoe), (1.0, 0.0, 0.0));
    }

    #[test]
    fn scale_error() {
        let mut gt = car(0.0, None);
        gt.dimensions = Dimensions {
            h: 2.0,
            w: 2.0,
            l: 2.0,
        };
        let mut det = car(0.0, Some(0.5));
        det.dimensions = Dimensions {
            h: 1.0,
            w: 1.0,
            l: 1.0,
        };
        let e = nuscenes_errors(&[frame(vec![gt], vec![det])], "Car", 2.0).unwrap();
        assert!((e.ase - 0.875).abs() < 1e-15);
    }

    #[test]
    fn orientation_error_wraps() {
        let mut gt = car(0.0, None);
        gt.rotation_y = 3.0;
        let mut det = car(0.0, Some(0.5));
        det.rotation_y = -3.0;
        let e = nuscenes_errors(&[frame(vec![gt], vec![det])], "Car", 2.0).unwrap();
        assert!((e.aoe - (2.0 * std::f64::consts::PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn no_matches_is_distinct() {
        let mut det = car(0.0, Some(0.5));
        det.location.x += 5.0;
        assert!(matches!(
            nuscenes_errors(&[frame(vec![car(0.0, None)], vec![det])], "Car", 2.0),
            Err(EvalError::NoMatches { .. })
        ));
    }
}
