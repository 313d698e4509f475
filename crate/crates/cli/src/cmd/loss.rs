use clap::Args;
use serde_json::json;
use std::path::{Path, PathBuf};

use tiltkit_core::loss::{
    gradient_check, loss_gradients, read_tensor, tensor_metadata_json, total_loss, write_tensor,
    LossError, LossWeights,
};
use tiltkit_core::FeatureTensor;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::io::{emit, read_bytes, write_bytes};
use crate::report::{render, Cell, ReportArgs, Table, REPORT_KEYS};

/// Central-difference step used by `--gradient-check`.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Content/style losses over tensor container files.
#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    /// Output feature tensors, one per layer; the last pairs with the content target
    #[arg(long = "output", value_delimiter = ',')]
    pub outputs: Vec<PathBuf>,
    /// Content target tensor
    #[arg(long)]
    pub content_target: Option<PathBuf>,
    /// Style target tensors, one per layer
    #[arg(long = "style-target", value_delimiter = ',')]
    pub style_targets: Vec<PathBuf>,
    /// Content weight [default: 1]
    #[arg(long)]
    pub content_weight: Option<f64>,
    /// Style weight [default: 1]
    #[arg(long)]
    pub style_weight: Option<f64>,
    /// Compare analytic gradients with central finite differences
    #[arg(long)]
    pub gradient_check: bool,
    /// Finite-difference step
    #[arg(long)]
    pub step: Option<f64>,
    /// Write gradient tensors (and JSON metadata sidecars) here
    #[arg(long)]
    pub gradient_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: ReportArgs,
}

pub const KEYS: &[&str] = &[
    "output",
    "content-target",
    "style-target",
    "content-weight",
    "style-weight",
    "gradient-check",
    "step",
    "gradient-out",
];

fn load(path: &Path) -> Result<FeatureTensor, CliError> {
    read_tensor(&read_bytes(path)?).map_err(|e| CliError::input(path, e))
}

fn semantic(e: LossError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn run(args: &LossArgs, file: &ConfigFile) -> Result<(), CliError> {
    let keys: Vec<&str> = KEYS.iter().chain(REPORT_KEYS.iter()).copied().collect();
    file.check_keys(&keys)?;
    let outputs: Vec<PathBuf> = file
        .pick_list(args.outputs.clone(), "output")?
        .unwrap_or_default();
    let content_path: PathBuf = file.require(args.content_target.clone(), "content-target")?;
    let styles: Vec<PathBuf> = file
        .pick_list(args.style_targets.clone(), "style-target")?
        .unwrap_or_default();
    let weights = LossWeights {
        content: file.pick_or(args.content_weight, "content-weight", 1.0)?,
        style: file.pick_or(args.style_weight, "style-weight", 1.0)?,
    };
    let check = file.pick_bool(args.gradient_check, "gradient-check")?;
    let step = file.pick_or(args.step, "step", DEFAULT_STEP)?;
    let gradient_out: Option<PathBuf> = file.pick(args.gradient_out.clone(), "gradient-out")?;
    let (format, report) = args.output.resolve(file)?;
    if outputs.is_empty() {
        return Err(CliError::Usage("missing required --output".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::Usage(format!("step {step} must be positive")));
    }

    let out_t = outputs
        .iter()
        .map(|p| load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let content_t = load(&content_path)?;
    let style_t = styles
        .iter()
        .map(|p| load(p))
        .collect::<Result<Vec<_>, _>>()?;

    let losses = total_loss(&out_t, &content_t, &style_t, weights).map_err(semantic)?;
    let grad_check = if check {
        Some(gradient_check(&out_t, &content_t, &style_t, weights, step).map_err(semantic)?)
    } else {
        None
    };
    if let Some(dir) = &gradient_out {
        let grads = loss_gradients(&out_t, &content_t, &style_t, weights).map_err(semantic)?;
        for (m, g) in grads.iter().enumerate() {
            write_bytes(&dir.join(format!("grad_{m}.bin")), &write_tensor(g))?;
            write_bytes(
                &dir.join(format!("grad_{m}.json")),
                tensor_metadata_json(g).as_bytes(),
            )?;
        }
    }

    let mut table = Table::new(&["metric", "value"]);
    table.push(vec!["content".into(), Cell::Num(losses.content)]);
    table.push(vec!["style".into(), Cell::Num(losses.style)]);
    table.push(vec!["total".into(), Cell::Num(losses.total)]);
    if let Some(g) = &grad_check {
        table.push(vec![
            "gradient_max_relative_error".into(),
            Cell::Num(g.max_relative_error),
        ]);
    }
    let json = json!({
        "content": losses.content,
        "style": losses.style,
        "total": losses.total,
        "weights": weights,
        "gradient_check": grad_check,
    });
    emit(report.as_deref(), &render(format, &json, &table))
}
