#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tiltkit_core::kitti::{write_calib_file, write_label_file, CalibrationSet, Dimensions};
use tiltkit_core::{BBox2D, Box3D, CameraIntrinsics, ObjectLabel, Point3Camera};

pub fn tiltkit() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tiltkit"));
    c.env_remove("TILTKIT_SEED");
    c
}

pub fn run(args: &[&str]) -> Output {
    tiltkit().args(args).output().expect("spawn tiltkit")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// KITTI-like intrinsics for a 1242x375 image.
pub fn kitti_k() -> CameraIntrinsics {
    CameraIntrinsics::new(721.5377, 721.5377, 609.5593, 172.854).unwrap()
}

/// Car label whose 2D box is the hull of its projected 3D box.
pub fn projected_car(
    k: &CameraIntrinsics,
    x: f64,
    z: f64,
    yaw: f64,
    score: Option<f64>,
) -> ObjectLabel {
    let b = Box3D::new(Point3Camera::new(x, 1.65, z), 1.5, 1.6, 3.9, yaw).unwrap();
    let mut bbox = BBox2D {
        left: f64::INFINITY,
        top: f64::INFINITY,
        right: f64::NEG_INFINITY,
        bottom: f64::NEG_INFINITY,
    };
    for c in b.corners() {
        let u = k.fx() * c.x / c.z + k.cx();
        let v = k.fy() * c.y / c.z + k.cy();
        bbox.left = bbox.left.min(u);
        bbox.right = bbox.right.max(u);
        bbox.top = bbox.top.min(v);
        bbox.bottom = bbox.bottom.max(v);
    }
    ObjectLabel {
        class_name: "Car".into(),
        truncated: 0.0,
        occluded: 0,
        alpha: yaw - x.atan2(z),
        bbox,
        dimensions: Dimensions {
            h: 1.5,
            w: 1.6,
            l: 3.9,
        },
        location: Point3Camera::new(x, 1.65, z),
        rotation_y: yaw,
        score,
    }
}

/// Round-trips through the 2-decimal writer so the on-disk text is canonical.
pub fn canonical(labels: &[ObjectLabel]) -> String {
    write_label_file(labels)
}

pub struct Scene {
    pub root: PathBuf,
    pub labels: PathBuf,
    pub calib: PathBuf,
    pub ids: Vec<String>,
}

/// `frames` frames of `per_frame` well-separated cars, all inside the image
/// after small perturbations. Objects sit in distinct depth slots so no
/// detection can overlap two ground truths.
pub fn write_scene(root: &Path, frames: usize, per_frame: usize, seed: u64) -> Scene {
    let k = kitti_k();
    let labels = root.join("labels");
    let calib = root.join("calib");
    std::fs::create_dir_all(&labels).unwrap();
    std::fs::create_dir_all(&calib).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut ids = Vec::new();
    for f in 0..frames {
        let id = format!("{f:06}");
        let objs: Vec<ObjectLabel> = (0..per_frame)
            .map(|i| {
                let z = 12.0 + 9.0 * i as f64 + rng.random_range(0.0..3.0);
                let x = rng.random_range(-0.3..0.3) * z;
                let yaw = rng.random_range(-3.1..3.1);
                projected_car(&k, x, z, yaw, None)
            })
            .collect();
        std::fs::write(labels.join(format!("{id}.txt")), canonical(&objs)).unwrap();
        std::fs::write(
            calib.join(format!("{id}.txt")),
            write_calib_file(&CalibrationSet::from_intrinsics(&k)),
        )
        .unwrap();
        ids.push(id);
    }
    Scene {
        root: root.to_path_buf(),
        labels,
        calib,
        ids,
    }
}

/// Copies every label file of `from` into `to`, appending a score to each
/// line.
pub fn as_detections(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let scored: String = text.lines().map(|l| format!("{l} 0.9000\n")).collect();
        std::fs::write(to.join(path.file_name().unwrap()), scored).unwrap();
    }
}

/// Every file under `dir` (recursively) with its bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

/// Parses a JSON report and returns the AP value of one row.
pub fn cell(
    report: &serde_json::Value,
    set: &str,
    metric: &str,
    difficulty: &str,
) -> serde_json::Value {
    report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["set"] == set && r["metric"] == metric && r["difficulty"] == difficulty)
        .unwrap_or_else(|| panic!("no row {set}/{metric}/{difficulty}"))["value"]
        .clone()
}
