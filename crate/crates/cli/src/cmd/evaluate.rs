use clap::Args;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tiltkit_core::eval::{
    average_orientation_similarity, average_precision_40, nuscenes_errors, EvalError,
    DEFAULT_MATCH_RADIUS,
};
use tiltkit_core::{DetectionFrame, DifficultyBin, IouKind, ObjectLabel};

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::io::{emit, list_frames, read_labels, require_dir};
use crate::report::{render, Cell, ReportArgs, Table, REPORT_KEYS};

/// Score assumed for detection lines without one, so ground-truth files can
/// be scored directly.
pub const DEFAULT_SCORE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ap2d,
    ApBev,
    Ap3d,
    Aos,
    Ate,
    Ase,
    Aoe,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ap2d => "ap2d",
            Metric::ApBev => "apbev",
            Metric::Ap3d => "ap3d",
            Metric::Aos => "aos",
            Metric::Ate => "ate",
            Metric::Ase => "ase",
            Metric::Aoe => "aoe",
        }
    }

    fn is_nuscenes(self) -> bool {
        matches!(self, Metric::Ate | Metric::Ase | Metric::Aoe)
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ap2d" => Metric::Ap2d,
            "apbev" => Metric::ApBev,
            "ap3d" => Metric::Ap3d,
            "aos" => Metric::Aos,
            "ate" => Metric::Ate,
            "ase" => Metric::Ase,
            "aoe" => Metric::Aoe,
            other => {
                return Err(format!(
                    "unknown metric `{other}` (ap2d, apbev, ap3d, aos, ate, ase, aoe)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bin(pub DifficultyBin);

impl FromStr for Bin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Bin(match s.to_ascii_lowercase().as_str() {
            "easy" => DifficultyBin::Easy,
            "moderate" => DifficultyBin::Moderate,
            "hard" => DifficultyBin::Hard,
            "all" => DifficultyBin::Ignored,
            other => {
                return Err(format!(
                    "unknown difficulty `{other}` (easy, moderate, hard, all)"
                ))
            }
        }))
    }
}

/// Score detections against ground truth.
#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Ground-truth label directory
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Detection directory (missing frames count as empty)
    #[arg(long)]
    pub det: Option<PathBuf>,
    /// Second detection directory; adds disturbed and decrease rows
    #[arg(long)]
    pub disturbed: Option<PathBuf>,
    /// Ground truth for the disturbed set [default: --gt]
    #[arg(long)]
    pub disturbed_gt: Option<PathBuf>,
    /// Classes [default: Car]
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Metrics: ap2d, apbev, ap3d, aos, ate, ase, aoe [default: ap2d,apbev,ap3d,aos]
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<Metric>,
    /// IoU thresholds for AP metrics [default: 0.7]
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Difficulty bins: easy, moderate, hard, all [default: easy,moderate,hard]
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<Bin>,
    /// Center-distance match radius for ate/ase/aoe, meters
    #[arg(long)]
    pub radius: Option<f64>,
    #[command(flatten)]
    pub output: ReportArgs,
}

pub const KEYS: &[&str] = &[
    "gt",
    "det",
    "disturbed",
    "disturbed-gt",
    "classes",
    "metrics",
    "thresholds",
    "bins",
    "radius",
];

fn load_frames(gt_dir: &Path, det_dir: &Path) -> Result<Vec<DetectionFrame>, CliError> {
    require_dir(det_dir)?;
    let gt = list_frames(gt_dir)?;
    if gt.is_empty() {
        return Err(CliError::input(gt_dir, "no label files"));
    }
    let known: std::collections::BTreeSet<&str> = gt.iter().map(|(id, _)| id.as_str()).collect();
    for (id, _) in list_frames(det_dir)? {
        if !known.contains(id.as_str()) {
            eprintln!(
                "{}: frame {id} has no ground truth; skipped",
                det_dir.display()
            );
        }
    }
    gt.iter()
        .map(|(id, path)| {
            let det_path = det_dir.join(format!("{id}.txt"));
            let mut detections: Vec<ObjectLabel> = if det_path.is_file() {
                read_labels(&det_path)?
            } else {
                Vec::new()
            };
            for d in &mut detections {
                d.score.get_or_insert(DEFAULT_SCORE);
            }
            Ok(DetectionFrame {
                frame_id: id.clone(),
                ground_truth: read_labels(path)?,
                detections,
                intrinsics: None,
            })
        })
        .collect()
}

/// `None` for cells that are undefined on this data.
fn undefined_as_none(r: Result<f64, EvalError>) -> Result<Option<f64>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(EvalError::NoGroundTruth { .. } | EvalError::NoMatches { .. }) => Ok(None),
        Err(e @ EvalError::InvalidThreshold(_)) => Err(CliError::Usage(e.to_string())),
        Err(e) => Err(CliError::input(Path::new("<detections>"), e)),
    }
}

struct Cells {
    keys: Vec<(String, Metric, String, f64)>,
}

struct Selection<'a> {
    classes: &'a [String],
    metrics: &'a [Metric],
    thresholds: &'a [f64],
    bins: &'a [Bin],
    radius: f64,
}

impl Selection<'_> {
    fn cells(&self) -> Cells {
        let mut keys = Vec::new();
        for class in self.classes {
            for &m in self.metrics {
                if m.is_nuscenes() {
                    keys.push((class.clone(), m, "all".to_string(), self.radius));
                    continue;
                }
                for b in self.bins {
                    for &t in self.thresholds {
                        keys.push((class.clone(), m, b.0.name().to_string(), t));
                    }
                }
            }
        }
        Cells { keys }
    }

    fn evaluate(&self, frames: &[DetectionFrame]) -> Result<Vec<Option<f64>>, CliError> {
        let mut out = Vec::new();
        for class in self.classes {
            for &m in self.metrics {
                if m.is_nuscenes() {
                    let errs = match nuscenes_errors(frames, class, self.radius) {
                        Ok(e) => Some(e),
                        Err(EvalError::NoMatches { .. }) => None,
                        Err(e) => return Err(CliError::input(Path::new("<detections>"), e)),
                    };
                    out.push(errs.map(|e| match m {
                        Metric::Ate => e.ate,
                        Metric::Ase => e.ase,
                        _ => e.aoe,
                    }));
                    continue;
                }
                for b in self.bins {
                    for &t in self.thresholds {
                        let r = match m {
                            Metric::Ap2d => {
                                average_precision_40(frames, class, IouKind::TwoD, t, b.0)
                            }
                            Metric::ApBev => {
                                average_precision_40(frames, class, IouKind::Bev, t, b.0)
                            }
                            Metric::Ap3d => {
                                average_precision_40(frames, class, IouKind::ThreeD, t, b.0)
                            }
                            _ => average_orientation_similarity(frames, class, t, b.0),
                        };
                        out.push(undefined_as_none(r.map(|a| a.value))?);
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn run(args: &EvaluateArgs, file: &ConfigFile) -> Result<(), CliError> {
    let keys: Vec<&str> = KEYS.iter().chain(REPORT_KEYS.iter()).copied().collect();
    file.check_keys(&keys)?;
    let gt_dir: PathBuf = file.require(args.gt.clone(), "gt")?;
    let det_dir: PathBuf = file.require(args.det.clone(), "det")?;
    let disturbed: Option<PathBuf> = file.pick(args.disturbed.clone(), "disturbed")?;
    let disturbed_gt: PathBuf =
        file.pick_or(args.disturbed_gt.clone(), "disturbed-gt", gt_dir.clone())?;
    let classes = file
        .pick_list(args.classes.clone(), "classes")?
        .unwrap_or_else(|| vec!["Car".to_string()]);
    let metrics = file
        .pick_list(args.metrics.clone(), "metrics")?
        .unwrap_or_else(|| vec![Metric::Ap2d, Metric::ApBev, Metric::Ap3d, Metric::Aos]);
    let thresholds = file
        .pick_list(args.thresholds.clone(), "thresholds")?
        .unwrap_or_else(|| vec![0.7]);
    let bins = file
        .pick_list(args.bins.clone(), "bins")?
        .unwrap_or_else(|| DifficultyBin::GRADED.iter().map(|&b| Bin(b)).collect());
    let radius = file.pick_or(args.radius, "radius", DEFAULT_MATCH_RADIUS)?;
    let (format, report) = args.output.resolve(file)?;
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(CliError::Usage(format!("threshold {t} outside (0, 1]")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(CliError::Usage(format!("radius {radius} must be positive")));
    }

    let selection = Selection {
        classes: &classes,
        metrics: &metrics,
        thresholds: &thresholds,
        bins: &bins,
        radius,
    };
    let original = selection.evaluate(&load_frames(&gt_dir, &det_dir)?)?;
    let disturbed_values = match &disturbed {
        Some(dir) => Some(selection.evaluate(&load_frames(&disturbed_gt, dir)?)?),
        None => None,
    };

    let mut table = Table::new(&["set", "class", "metric", "difficulty", "threshold", "value"]);
    let cells = selection.cells();
    let mut push = |set: &str, values: &[Option<f64>]| {
        for ((class, m, bin, t), v) in cells.keys.iter().zip(values) {
            table.push(vec![
                set.into(),
                class.as_str().into(),
                m.name().into(),
                bin.as_str().into(),
                Cell::Num(*t),
                Cell::maybe(*v),
            ]);
        }
    };
    push("original", &original);
    if let Some(d) = &disturbed_values {
        push("disturbed", d);
        let decrease: Vec<Option<f64>> = original
            .iter()
            .zip(d)
            .map(|(o, d)| Some((*o)? - (*d)?))
            .collect();
        push("decrease", &decrease);
    }
    let json = json!({ "rows": table.to_json() });
    emit(report.as_deref(), &render(format, &json, &table))
}
