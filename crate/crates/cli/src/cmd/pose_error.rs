use clap::Args;
use serde_json::json;
use std::path::PathBuf;

use tiltkit_core::geometry::perturbation_matrix;
use tiltkit_core::horizon::{angular_error, tilt_from_pose};
use tiltkit_core::kitti::{parse_odometry_poses, OdometryPose};
use tiltkit_core::perturb::parse_sidecar;
use tiltkit_core::ExtrinsicPerturbation;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::io::{emit, read_bytes, read_text};
use crate::report::{render, Cell, ReportArgs, Table, NOT_AVAILABLE, REPORT_KEYS};

/// Score per-frame pitch/roll estimates against an odometry trajectory.
#[derive(Debug, Clone, Args)]
pub struct PoseErrorArgs {
    /// `{frame_id, pitch, roll}` JSONL estimates, one line per pose in order
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// KITTI odometry pose file
    #[arg(long)]
    pub poses: Option<PathBuf>,
    #[command(flatten)]
    pub output: ReportArgs,
}

pub const KEYS: &[&str] = &["estimates", "poses"];

/// Per-frame angular errors (degrees) against the tilt of each pose, with the
/// first pose's reference frame taken as level.
pub fn frame_errors(
    estimates: &[ExtrinsicPerturbation],
    poses: &[OdometryPose],
) -> Result<Vec<f64>, CliError> {
    if estimates.len() != poses.len() {
        return Err(CliError::Usage(format!(
            "frame count mismatch: {} estimates, {} poses",
            estimates.len(),
            poses.len()
        )));
    }
    estimates
        .iter()
        .zip(poses)
        .map(|(e, pose)| {
            let truth = tilt_from_pose(&pose.rotation()).tilt;
            angular_error(&perturbation_matrix(*e), &truth)
                .map_err(|err| CliError::Usage(format!("pose {}: {err}", pose.frame_index)))
        })
        .collect()
}

/// Path length integrated over consecutive pose translations, meters.
pub fn trajectory_length(poses: &[OdometryPose]) -> f64 {
    poses
        .windows(2)
        .map(|w| (w[1].translation() - w[0].translation()).norm())
        .sum()
}

pub fn run(args: &PoseErrorArgs, file: &ConfigFile) -> Result<(), CliError> {
    let keys: Vec<&str> = KEYS.iter().chain(REPORT_KEYS.iter()).copied().collect();
    file.check_keys(&keys)?;
    let est_path: PathBuf = file.require(args.estimates.clone(), "estimates")?;
    let pose_path: PathBuf = file.require(args.poses.clone(), "poses")?;
    let (format, report) = args.output.resolve(file)?;

    let records =
        parse_sidecar(&read_text(&est_path)?).map_err(|e| CliError::input(&est_path, e))?;
    let poses = parse_odometry_poses(read_bytes(&pose_path)?)
        .map_err(|e| CliError::input(&pose_path, e))?;
    let estimates = records
        .iter()
        .map(|r| {
            ExtrinsicPerturbation::new(r.pitch, r.roll).map_err(|e| CliError::input(&est_path, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if poses.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no poses",
            pose_path.display()
        )));
    }
    let errors = frame_errors(&estimates, &poses)?;
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let length = trajectory_length(&poses);
    let per_meter = (length > 0.0).then(|| mean / length);

    let mut table = Table::new(&["metric", "frame", "value"]);
    for (r, e) in records.iter().zip(&errors) {
        table.push(vec![
            "angular_error_deg".into(),
            r.frame_id.as_str().into(),
            Cell::Num(*e),
        ]);
    }
    table.push(vec![
        "mean_angular_error_deg".into(),
        "".into(),
        Cell::Num(mean),
    ]);
    table.push(vec![
        "trajectory_length_m".into(),
        "".into(),
        Cell::Num(length),
    ]);
    table.push(vec![
        "angular_error_deg_per_m".into(),
        "".into(),
        Cell::maybe(per_meter),
    ]);

    let frames: Vec<_> = records
        .iter()
        .zip(&errors)
        .map(|(r, e)| json!({ "frame_id": r.frame_id, "angular_error_deg": e }))
        .collect();
    let json = json!({
        "frames": frames,
        "mean_angular_error_deg": mean,
        "trajectory_length_m": length,
        "angular_error_deg_per_m": per_meter.map_or(json!(NOT_AVAILABLE), |v| json!(v)),
    });
    emit(report.as_deref(), &render(format, &json, &table))
}
