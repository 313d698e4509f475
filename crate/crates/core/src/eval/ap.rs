use super::{match_frame, DetectionFrame, EvalError, IouKind};
use crate::geometry::wrap_angle;
use crate::kitti::DifficultyBin;
use rayon::prelude::*;
use serde::Serialize;

pub const RECALL_POINTS: usize = 40;

/// Interpolated precision at recall `k/40`, `k = 1..=40`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    /// Percentage in `[0, 100]`.
    pub value: f64,
    pub curve: PrCurve,
    pub num_ground_truth: usize,
}

struct Ranked {
    score: f64,
    true_positive: bool,
    similarity: f64,
}

/// Matches every frame and returns the scored, non-ignored detections (highest
/// score first) together with the number of counted ground truths.
fn rank_all(
    frames: &[DetectionFrame],
    class: &str,
    kind: IouKind,
    threshold: f64,
    bin: DifficultyBin,
) -> Result<(Vec<Ranked>, usize), EvalError> {
    if frames.is_empty() {
        return Err(EvalError::NoFrames);
    }
    let per_frame: Vec<(Vec<Ranked>, usize)> = frames
        .par_iter()
        .map(|f| {
            let m = match_frame(f, class, kind, threshold, bin)?;
            let score = |d: usize| f.detections[d].score.unwrap_or(f64::NEG_INFINITY);
            let mut ranked: Vec<(usize, Ranked)> = m
                .pairs
                .iter()
                .map(|&(g, d, _)| {
                    let delta = wrap_angle(f.detections[d].alpha - f.ground_truth[g].alpha);
                    (
                        d,
                        Ranked {
                            score: score(d),
                            true_positive: true,
                            similarity: (1.0 + delta.cos()) / 2.0,
                        },
                    )
                })
                .chain(m.unmatched_det.iter().map(|&d| {
                    (
                        d,
                        Ranked {
                            score: score(d),
                            true_positive: false,
                            similarity: 0.0,
                        },
                    )
                }))
                .collect();
            ranked.sort_by_key(|(d, _)| *d);
            let n_gt = m.pairs.len() + m.unmatched_gt.len();
            Ok((ranked.into_iter().map(|(_, r)| r).collect(), n_gt))
        })
        .collect::<Result<_, EvalError>>()?;

    let n_gt = per_frame.iter().map(|(_, n)| n).sum();
    let mut all: Vec<Ranked> = per_frame.into_iter().flat_map(|(r, _)| r).collect();
    // stable: ties keep frame order, then detection order
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok((all, n_gt))
}

/// Sweeps every distinct score threshold and interpolates precision at the
/// 40 recall points. `weight` is the per-TP contribution to the numerator
/// (1 for AP, orientation similarity for AOS).
fn sweep(ranked: &[Ranked], n_gt: usize, weight: impl Fn(&Ranked) -> f64) -> ApResult {
    // (tp, weighted tp, fp) after each distinct threshold
    let mut operating_points = Vec::new();
    let (mut tp, mut fp, mut weighted) = (0usize, 0usize, 0.0f64);
    for (i, r) in ranked.iter().enumerate() {
        if r.true_positive {
            tp += 1;
            weighted += weight(r);
        } else {
            fp += 1;
        }
        let last_of_tie = ranked.get(i + 1).is_none_or(|next| next.score != r.score);
        if last_of_tie {
            operating_points.push((tp, weighted, fp));
        }
    }

    let recall: Vec<f64> = (1..=RECALL_POINTS)
        .map(|k| k as f64 / RECALL_POINTS as f64)
        .collect();
    let precision: Vec<f64> = (1..=RECALL_POINTS)
        .map(|k| {
            operating_points
                .iter()
                // recall >= k/40, in exact integer arithmetic
                .filter(|(tp, _, _)| tp * RECALL_POINTS >= k * n_gt)
                .map(|&(tp, w, fp)| {
                    if tp + fp == 0 {
                        0.0
                    } else {
                        w / (tp + fp) as f64
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let value = precision.iter().sum::<f64>() / RECALL_POINTS as f64 * 100.0;
    ApResult {
        value,
        curve: PrCurve { recall, precision },
        num_ground_truth: n_gt,
    }
}

/// 40-point interpolated average precision, as a percentage.
pub fn average_precision_40(
    frames: &[DetectionFrame],
    class: &str,
    kind: IouKind,
    threshold: f64,
    bin: DifficultyBin,
) -> Result<ApResult, EvalError> {
    let (ranked, n_gt) = rank_all(frames, class, kind, threshold, bin)?;
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth {
            class: class.to_string(),
            bin,
        });
    }
    Ok(sweep(&ranked, n_gt, |_| 1.0))
}

/// Average orientation similarity: the AP40 sweep over 2D matches with each
/// true positive weighted by `(1 + cos Δα) / 2`.
pub fn average_orientation_similarity(
    frames: &[DetectionFrame],
    class: &str,
    threshold: f64,
    bin: DifficultyBin,
) -> Result<ApResult, EvalError> {
    let (ranked, n_gt) = rank_all(frames, class, IouKind::TwoD, threshold, bin)?;
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth {
            class: class.to_string(),
            bin,
        });
    }
    Ok(sweep(&ranked, n_gt, |r| r.similarity))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const BIN: DifficultyBin = DifficultyBin::Hard;

    #[test]
    fn perfect_detections() {
        let gt = vec![car(0.0, None), car(2.0, None), car(4.0, None)];
        let det = vec![
            car(0.0, Some(0.2)),
            car(2.0, Some(0.9)),
            car(4.0, Some(0.5)),
        ];
        let frames = vec![frame(gt, det)];
        for kind in [IouKind::TwoD, IouKind::Bev, IouKind::ThreeD] {
            let ap = average_precision_40(&frames, "Car", kind, 0.7, BIN).unwrap();
            assert_eq!(ap.value, 100.0);
        }
    }

    #[test]
    fn no_detections() {
        let frames = vec![frame(vec![car(0.0, None)], vec![])];
        assert_eq!(
            average_precision_40(&frames, "Car", IouKind::ThreeD, 0.7, BIN)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn half_recall() {
        let frames = vec![frame(
            vec![car(0.0, None), car(2.0, None)],
            vec![car(0.0, Some(0.9))],
        )];
        let ap = average_precision_40(&frames, "Car", IouKind::ThreeD, 0.7, BIN).unwrap();
        assert_eq!(ap.value, 50.0);
        assert_eq!(ap.curve.precision.iter().filter(|&&p| p == 1.0).count(), 20);
    }

    #[test]
    fn undefined_without_ground_truth() {
        let frames = vec![frame(vec![], vec![car(0.0, Some(0.9))])];
        assert!(matches!(
            average_precision_40(&frames, "Car", IouKind::TwoD, 0.7, BIN),
            Err(EvalError::NoGroundTruth { .. })
        ));
        assert_eq!(
            average_precision_40(&[], "Car", IouKind::TwoD, 0.7, BIN),
            Err(EvalError::NoFrames)
        );
    }

    #[test]
    fn interpolated_precision_is_non_increasing() {
        let gt = (0..6).map(|i| car(2.0 * i as f64, None)).collect();
        let det = vec![
            car(0.0, Some(0.9)),
            car(30.0, Some(0.85)),
            car(2.0, Some(0.8)),
            car(40.0, Some(0.7)),
            car(4.0, Some(0.6)),
        ];
        let ap = average_precision_40(&[frame(gt, det)], "Car", IouKind::TwoD, 0.5, BIN).unwrap();
        assert!(ap.curve.precision.windows(2).all(|w| w[0] >= w[1]));
    }

    fn with_alpha(mut l: crate::kitti::ObjectLabel, alpha: f64) -> crate::kitti::ObjectLabel {
        l.alpha = alpha;
        l
    }

    #[test]
    fn aos_examples() {
        let gt = vec![car(0.0, None), car(2.0, None)];
        let exact = vec![car(0.0, Some(0.9)), car(2.0, Some(0.8))];
        let frames = vec![frame(gt.clone(), exact)];
        let ap = average_precision_40(&frames, "Car", IouKind::TwoD, 0.7, BIN).unwrap();
        let aos = average_orientation_similarity(&frames, "Car", 0.7, BIN).unwrap();
        assert_eq!(aos.value, ap.value);

        let flipped = vec![
            with_alpha(car(0.0, Some(0.9)), PI),
            with_alpha(car(2.0, Some(0.8)), PI),
        ];
        let aos =
            average_orientation_similarity(&[frame(gt.clone(), flipped)], "Car", 0.7, BIN).unwrap();
        assert!(aos.value.abs() < 1e-12);

        // one detection per recall level would weight precision differently at
        // each level, so tie the scores to get a single operating point
        let half = vec![
            with_alpha(car(0.0, Some(0.9)), FRAC_PI_2),
            car(2.0, Some(0.9)),
        ];
        let frames = vec![frame(gt, half)];
        let ap = average_precision_40(&frames, "Car", IouKind::TwoD, 0.7, BIN).unwrap();
        let aos = average_orientation_similarity(&frames, "Car", 0.7, BIN).unwrap();
        assert!((aos.value - 0.75 * ap.value).abs() < 1e-12);
    }
}
