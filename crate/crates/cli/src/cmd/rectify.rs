use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tiltkit_core::geometry::perturbation_matrix;
use tiltkit_core::horizon::{
    angular_error, extrinsics_from_horizon_vp, HorizonLine, VanishingPoint,
};
use tiltkit_core::kitti::{write_label_file_with_precision, LABEL_DECIMALS};
use tiltkit_core::perturb::{parse_sidecar, perturb_labels_with_rotation, FrameFailure};
use tiltkit_core::ExtrinsicPerturbation;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::io::{
    emit, list_frames, read_calib, read_labels, read_text, require_dir, require_file, write_bytes,
};
use crate::report::{render, Cell, ReportArgs, Table, REPORT_KEYS};

/// One horizon/vanishing-point annotation per line of a JSONL file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord<'a> {
    pub frame_id: &'a str,
    /// Horizon slope `dv/du`.
    pub slope: f64,
    /// Horizon row at the principal column.
    pub intercept_v: f64,
    pub vp_u: f64,
    pub vp_v: f64,
}

/// Move detections between the level and the perturbed camera.
#[derive(Debug, Clone, Args)]
pub struct RectifyArgs {
    /// Detection label directory
    #[arg(long)]
    pub det: Option<PathBuf>,
    /// Calibration directory
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Output label directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extrinsics from a `{frame_id, pitch, roll}` JSONL sidecar
    #[arg(long, conflicts_with = "horizon")]
    pub sidecar: Option<PathBuf>,
    /// Extrinsics from horizon/vanishing-point JSONL annotations
    #[arg(long)]
    pub horizon: Option<PathBuf>,
    /// Sidecar with true extrinsics; enables angular-error reporting
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Apply the inverse rotation (perturbed camera back to level)
    #[arg(long)]
    pub inverse: bool,
    /// Decimals written for label values
    #[arg(long)]
    pub decimals: Option<usize>,
    #[command(flatten)]
    pub output: ReportArgs,
}

pub const KEYS: &[&str] = &[
    "det", "calib", "out", "sidecar", "horizon", "truth", "inverse", "decimals",
];

type Extrinsics = BTreeMap<String, ExtrinsicPerturbation>;

fn load_sidecar(path: &Path) -> Result<Extrinsics, CliError> {
    parse_sidecar(&read_text(path)?)
        .map_err(|e| CliError::input(path, e))?
        .into_iter()
        .map(|r| {
            let p = ExtrinsicPerturbation::new(r.pitch, r.roll)
                .map_err(|e| CliError::input(path, e))?;
            Ok((r.frame_id, p))
        })
        .collect()
}

fn load_horizon(path: &Path, calib_dir: &Path) -> Result<Extrinsics, CliError> {
    let text = read_text(path)?;
    let mut out = Extrinsics::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let r: HorizonRecord = serde_json::from_str(line).map_err(|e| CliError::input(path, e))?;
        let calib_path = calib_dir.join(format!("{}.txt", r.frame_id));
        let k = read_calib(&calib_path)?
            .intrinsics()
            .map_err(|e| CliError::input(&calib_path, e))?;
        let p = extrinsics_from_horizon_vp(
            &HorizonLine {
                slope: r.slope,
                intercept_v: r.intercept_v,
            },
            &VanishingPoint {
                u: r.vp_u,
                v: r.vp_v,
            },
            &k,
        )
        .map_err(|e| CliError::input(path, format!("frame {}: {e}", r.frame_id)))?;
        out.insert(r.frame_id.to_string(), p);
    }
    Ok(out)
}

pub fn run(args: &RectifyArgs, file: &ConfigFile) -> Result<(), CliError> {
    let keys: Vec<&str> = KEYS.iter().chain(REPORT_KEYS.iter()).copied().collect();
    file.check_keys(&keys)?;
    let det_dir: PathBuf = file.require(args.det.clone(), "det")?;
    let calib_dir: PathBuf = file.require(args.calib.clone(), "calib")?;
    let out_dir: PathBuf = file.require(args.out.clone(), "out")?;
    let sidecar: Option<PathBuf> = file.pick(args.sidecar.clone(), "sidecar")?;
    let horizon: Option<PathBuf> = file.pick(args.horizon.clone(), "horizon")?;
    let truth: Option<PathBuf> = file.pick(args.truth.clone(), "truth")?;
    let inverse = file.pick_bool(args.inverse, "inverse")?;
    let decimals = file.pick_or(args.decimals, "decimals", LABEL_DECIMALS)?;
    let (format, report) = args.output.resolve(file)?;

    require_dir(&calib_dir)?;
    for p in [&sidecar, &horizon, &truth].into_iter().flatten() {
        require_file(p)?;
    }
    let estimates = match (&sidecar, &horizon) {
        (Some(s), None) => load_sidecar(s)?,
        (None, Some(h)) => load_horizon(h, &calib_dir)?,
        _ => {
            return Err(CliError::Usage(
                "exactly one of --sidecar or --horizon is required".into(),
            ))
        }
    };
    let truth = truth.as_deref().map(load_sidecar).transpose()?;
    let frames = list_frames(&det_dir)?;

    let mut table = Table::new(&[
        "frame_id",
        "pitch_rad",
        "roll_rad",
        "pitch_deg",
        "roll_deg",
        "angular_error_deg",
        "dropped",
    ]);
    let mut failures = Vec::new();
    let mut errors = Vec::new();
    for (id, path) in &frames {
        let Some(&p) = estimates.get(id) else {
            failures.push(FrameFailure {
                frame_id: id.clone(),
                reason: "no extrinsics for frame".into(),
            });
            continue;
        };
        let calib_path = calib_dir.join(format!("{id}.txt"));
        let k = read_calib(&calib_path)?
            .intrinsics()
            .map_err(|e| CliError::input(&calib_path, e))?;
        let a_hat = perturbation_matrix(p);
        let rotation = if inverse { a_hat.inverse() } else { a_hat };
        let moved = perturb_labels_with_rotation(&read_labels(path)?, &k, &rotation, None);
        write_bytes(
            &out_dir.join(format!("{id}.txt")),
            write_label_file_with_precision(&moved.labels, decimals).as_bytes(),
        )?;
        if !moved.dropped.is_empty() {
            failures.push(FrameFailure {
                frame_id: id.clone(),
                reason: format!(
                    "dropped {} object(s): {:?}",
                    moved.dropped.len(),
                    moved.dropped
                ),
            });
        }
        let error = match truth.as_ref().and_then(|t| t.get(id)) {
            Some(&gt) => Some(
                angular_error(&a_hat, &perturbation_matrix(gt))
                    .map_err(|e| CliError::input(path, e))?,
            ),
            None => None,
        };
        errors.extend(error);
        table.push(vec![
            id.as_str().into(),
            Cell::Num(p.pitch()),
            Cell::Num(p.roll()),
            Cell::Num(p.pitch().to_degrees()),
            Cell::Num(p.roll().to_degrees()),
            Cell::maybe(error),
            Cell::Int(moved.dropped.len()),
        ]);
    }
    let mean_error = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    for f in &failures {
        eprintln!("frame {}: {}", f.frame_id, f.reason);
    }
    let json = json!({
        "inverse": inverse,
        "frames": table.to_json(),
        "mean_angular_error_deg": mean_error.map_or(json!(crate::report::NOT_AVAILABLE), |v| json!(v)),
        "failures": failures,
    });
    emit(report.as_deref(), &render(format, &json, &table))?;
    if frames.is_empty() || table.rows.is_empty() {
        return Err(CliError::input(&det_dir, "no frame could be rectified"));
    }
    Ok(())
}
