use clap::Args;
use serde_json::json;
use std::path::{Path, PathBuf};

use tiltkit_core::kitti::{write_label_file_with_precision, LABEL_DECIMALS};
use tiltkit_core::perturb::{
    simulate_dataset, FrameFailure, ImageBounds, PerturbationSpec, SimulationInput, DEFAULT_CLAMP,
    DEFAULT_SIGMA, KITTI_IMAGE_SIZE,
};
use tiltkit_core::RasterImage;

use crate::config::{resolve_seed, ConfigFile};
use crate::error::CliError;
use crate::io::{emit, list_frames, read_bytes, read_calib, read_labels, require_dir, write_bytes};

pub const SIDECAR_FILE: &str = "perturbations.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LABEL_SUBDIR: &str = "label_2";
pub const IMAGE_SUBDIR: &str = "image_2";

/// Disturb a labelled dataset with seeded pitch/roll perturbations.
#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Directory of KITTI label files (`<frame_id>.txt`)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Directory of KITTI calibration files
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Directory of PPM/PGM images to warp
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Standard deviation of both angles, radians [default: 1 degree]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Pitch standard deviation, radians (overrides --sigma)
    #[arg(long)]
    pub sigma_pitch: Option<f64>,
    /// Roll standard deviation, radians (overrides --sigma)
    #[arg(long)]
    pub sigma_roll: Option<f64>,
    /// Clamp on sampled angles, radians [default: 10 degrees]
    #[arg(long)]
    pub clamp: Option<f64>,
    /// Master seed; falls back to TILTKIT_SEED, then the config file, then 0
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decimals written for label values
    #[arg(long)]
    pub decimals: Option<usize>,
    /// Image width for 2D box clipping when a frame has no image
    #[arg(long)]
    pub image_width: Option<usize>,
    /// Image height for 2D box clipping when a frame has no image
    #[arg(long)]
    pub image_height: Option<usize>,
}

pub const KEYS: &[&str] = &[
    "labels",
    "calib",
    "images",
    "out",
    "sigma",
    "sigma-pitch",
    "sigma-roll",
    "clamp",
    "seed",
    "decimals",
    "image-width",
    "image-height",
];

fn find_image(dir: &Path, frame_id: &str) -> Option<PathBuf> {
    ["ppm", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{frame_id}.{ext}")))
        .find(|p| p.is_file())
}

fn load_frame(
    frame_id: &str,
    label_path: &Path,
    calib_dir: &Path,
    image_dir: Option<&Path>,
) -> Result<SimulationInput, CliError> {
    let labels = read_labels(label_path)?;
    let calib = read_calib(&calib_dir.join(format!("{frame_id}.txt")))?;
    let image = match image_dir {
        Some(dir) => {
            let path = find_image(dir, frame_id).ok_or_else(|| {
                CliError::input(dir, format!("no {frame_id}.ppm or {frame_id}.pgm"))
            })?;
            Some(
                RasterImage::from_pnm(&read_bytes(&path)?)
                    .map_err(|e| CliError::input(&path, e))?,
            )
        }
        None => None,
    };
    Ok(SimulationInput {
        frame_id: frame_id.to_string(),
        labels,
        calib,
        image,
    })
}

pub fn run(args: &SimulateArgs, file: &ConfigFile) -> Result<(), CliError> {
    file.check_keys(KEYS)?;
    let labels_dir: PathBuf = file.require(args.labels.clone(), "labels")?;
    let calib_dir: PathBuf = file.require(args.calib.clone(), "calib")?;
    let image_dir: Option<PathBuf> = file.pick(args.images.clone(), "images")?;
    let out: PathBuf = file.require(args.out.clone(), "out")?;
    let sigma = file.pick_or(args.sigma, "sigma", DEFAULT_SIGMA)?;
    let spec = PerturbationSpec::new(
        file.pick_or(args.sigma_pitch, "sigma-pitch", sigma)?,
        file.pick_or(args.sigma_roll, "sigma-roll", sigma)?,
        resolve_seed(args.seed, file)?,
        file.pick_or(args.clamp, "clamp", DEFAULT_CLAMP)?,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let decimals = file.pick_or(args.decimals, "decimals", LABEL_DECIMALS)?;
    let bounds = ImageBounds {
        width: file.pick_or(args.image_width, "image-width", KITTI_IMAGE_SIZE.width)?,
        height: file.pick_or(args.image_height, "image-height", KITTI_IMAGE_SIZE.height)?,
    };
    if bounds.width == 0 || bounds.height == 0 {
        return Err(CliError::Usage("image size must be positive".into()));
    }

    require_dir(&calib_dir)?;
    if let Some(dir) = &image_dir {
        require_dir(dir)?;
    }
    let frames = list_frames(&labels_dir)?;
    if frames.is_empty() {
        return Err(CliError::input(&labels_dir, "no label files"));
    }

    let mut inputs = Vec::with_capacity(frames.len());
    let mut failures = Vec::new();
    for (frame_id, path) in &frames {
        match load_frame(frame_id, path, &calib_dir, image_dir.as_deref()) {
            Ok(input) => inputs.push(input),
            Err(e) => failures.push(FrameFailure {
                frame_id: frame_id.clone(),
                reason: e.to_string(),
            }),
        }
    }

    let report = simulate_dataset(&inputs, &spec, bounds);
    failures.extend(report.failures.iter().cloned());
    failures.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    for f in &report.frames {
        let id = &f.frame.frame_id;
        write_bytes(
            &out.join(LABEL_SUBDIR).join(format!("{id}.txt")),
            write_label_file_with_precision(&f.frame.labels, decimals).as_bytes(),
        )?;
        if let Some(img) = &f.image {
            let bytes = img.to_pnm().map_err(|e| CliError::input(&out, e))?;
            write_bytes(
                &out.join(IMAGE_SUBDIR)
                    .join(format!("{id}.{}", img.pnm_extension())),
                &bytes,
            )?;
        }
    }
    write_bytes(&out.join(SIDECAR_FILE), report.sidecar_jsonl().as_bytes())?;

    let summary = json!({
        "frames": frames.len(),
        "simulated": report.frames.len(),
        "dropped_objects": report.dropped_objects,
        "failures": failures,
        "seed": spec.seed(),
        "sigma_pitch": spec.sigma_pitch(),
        "sigma_roll": spec.sigma_roll(),
        "clamp": spec.clamp(),
    });
    let mut bytes = serde_json::to_vec_pretty(&summary).expect("JSON values serialize");
    bytes.push(b'\n');
    write_bytes(&out.join(SUMMARY_FILE), &bytes)?;

    for f in &failures {
        eprintln!("frame {}: {}", f.frame_id, f.reason);
    }
    emit(
        None,
        format!(
            "simulated {}/{} frames, {} dropped objects\n",
            report.frames.len(),
            frames.len(),
            report.dropped_objects
        )
        .as_bytes(),
    )?;
    if report.frames.is_empty() {
        return Err(CliError::input(&labels_dir, "no frame could be simulated"));
    }
    Ok(())
}
