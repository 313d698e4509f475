//! Readers and writers for KITTI object labels, calibration files and
//! odometry pose files, plus the benchmark's difficulty strata.

use crate::geometry::{
    orthogonality_defect, Box3D, CameraIntrinsics, GeometryError, Point3Camera, RotationMatrix,
};
use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

pub const DONT_CARE: &str = "DontCare";

/// Per-entry tolerance on `R·Rᵀ − I` for pose rotation blocks.
pub const POSE_ROTATION_TOLERANCE: f64 = 1e-6;

/// Decimal places used by [`write_label_file`].
pub const LABEL_DECIMALS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KittiError {
    #[error("input is not valid UTF-8 (byte {0})")]
    InvalidUtf8(usize),
    #[error("line {line}: malformed ({found} fields, expected {expected}){}", token.as_ref().map(|t| format!(", offending token {t:?}")).unwrap_or_default())]
    MalformedLine {
        line: usize,
        found: usize,
        expected: &'static str,
        token: Option<String>,
    },
    #[error("line {line}: non-finite value in field `{field}`")]
    NonFiniteValue { line: usize, field: &'static str },
    #[error("line {line}: invalid `{field}`: {reason}")]
    InvalidValue {
        line: usize,
        field: &'static str,
        reason: &'static str,
    },
    #[error("missing key {0}")]
    MissingKey(&'static str),
    #[error("line {line}: rotation block is not orthogonal (defect {defect:e})")]
    NotARotation { line: usize, defect: f64 },
}

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox2D {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }
}

/// Object size in meters, in KITTI's `h w l` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub h: f64,
    pub w: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLabel {
    pub class_name: String,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    pub bbox: BBox2D,
    pub dimensions: Dimensions,
    pub location: Point3Camera,
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl ObjectLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }

    pub fn box3d(&self) -> Result<Box3D, GeometryError> {
        Box3D::new(
            self.location,
            self.dimensions.h,
            self.dimensions.w,
            self.dimensions.l,
            self.rotation_y,
        )
    }

    /// Copies location, size and yaw from `b`.
    pub fn set_box3d(&mut self, b: &Box3D) {
        self.location = b.center;
        self.dimensions = Dimensions {
            h: b.h,
            w: b.w,
            l: b.l,
        };
        self.rotation_y = b.yaw;
    }
}

const LABEL_FIELDS: [&str; 16] = [
    "type",
    "truncated",
    "occluded",
    "alpha",
    "left",
    "top",
    "right",
    "bottom",
    "height",
    "width",
    "length",
    "x",
    "y",
    "z",
    "rotation_y",
    "score",
];

fn as_text(bytes: &[u8]) -> Result<&str, KittiError> {
    std::str::from_utf8(bytes).map_err(|e| KittiError::InvalidUtf8(e.valid_up_to()))
}

fn number(
    line: usize,
    field: &'static str,
    token: &str,
    found: usize,
    expected: &'static str,
) -> Result<f64, KittiError> {
    let v: f64 = token.parse().map_err(|_| KittiError::MalformedLine {
        line,
        found,
        expected,
        token: Some(token.to_string()),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(KittiError::NonFiniteValue { line, field })
    }
}

/// Parses a label file: one object per line, 15 whitespace-separated fields
/// (ground truth) or 16 (detections with a trailing score). Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_label_file(text: impl AsRef<[u8]>) -> Result<Vec<ObjectLabel>, KittiError> {
    let text = as_text(text.as_ref())?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let found = tokens.len();
        if found != 15 && found != 16 {
            return Err(KittiError::MalformedLine {
                line,
                found,
                expected: "15 or 16",
                token: None,
            });
        }
        let mut vals = [0.0; 16];
        for (i, tok) in tokens.iter().enumerate().skip(1) {
            vals[i] = number(line, LABEL_FIELDS[i], tok, found, "15 or 16")?;
        }
        let label = ObjectLabel {
            class_name: tokens[0].to_string(),
            truncated: vals[1],
            occluded: vals[2] as i32,
            alpha: vals[3],
            bbox: BBox2D {
                left: vals[4],
                top: vals[5],
                right: vals[6],
                bottom: vals[7],
            },
            dimensions: Dimensions {
                h: vals[8],
                w: vals[9],
                l: vals[10],
            },
            location: Point3Camera::new(vals[11], vals[12], vals[13]),
            rotation_y: vals[14],
            score: (found == 16).then_some(vals[15]),
        };
        if vals[2].fract() != 0.0 {
            return Err(KittiError::InvalidValue {
                line,
                field: "occluded",
                reason: "not an integer",
            });
        }
        validate_label(line, &label)?;
        out.push(label);
    }
    Ok(out)
}

fn validate_label(line: usize, l: &ObjectLabel) -> Result<(), KittiError> {
    if l.is_dont_care() {
        return Ok(());
    }
    let invalid = |field, reason| {
        Err(KittiError::InvalidValue {
            line,
            field,
            reason,
        })
    };
    let angle_ok = |a: f64| a.abs() <= std::f64::consts::PI + 1e-9;
    // -1 marks "unknown", as written by detectors
    if !((0.0..=1.0).contains(&l.truncated) || l.truncated == -1.0) {
        return invalid("truncated", "outside [0, 1]");
    }
    if !(-1..=3).contains(&l.occluded) {
        return invalid("occluded", "outside {-1, 0, 1, 2, 3}");
    }
    if !angle_ok(l.alpha) {
        return invalid("alpha", "outside [-pi, pi]");
    }
    if !angle_ok(l.rotation_y) {
        return invalid("rotation_y", "outside [-pi, pi]");
    }
    if !(l.bbox.right > l.bbox.left && l.bbox.bottom > l.bbox.top) {
        return invalid("bbox", "empty box");
    }
    if !(l.dimensions.h > 0.0 && l.dimensions.w > 0.0 && l.dimensions.l > 0.0) {
        return invalid("dimensions", "non-positive size");
    }
    Ok(())
}

/// Writes labels in the two-decimal KITTI submission format. Scores keep at
/// least four decimals so detection rankings survive the round trip.
pub fn write_label_file(labels: &[ObjectLabel]) -> String {
    write_label_file_with_precision(labels, LABEL_DECIMALS)
}

pub fn write_label_file_with_precision(labels: &[ObjectLabel], decimals: usize) -> String {
    let p = decimals;
    let mut s = String::new();
    for l in labels {
        let _ = write!(
            s,
            "{} {:.p$} {} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$} {:.p$}",
            l.class_name,
            l.truncated,
            l.occluded,
            l.alpha,
            l.bbox.left,
            l.bbox.top,
            l.bbox.right,
            l.bbox.bottom,
            l.dimensions.h,
            l.dimensions.w,
            l.dimensions.l,
            l.location.x,
            l.location.y,
            l.location.z,
            l.rotation_y,
        );
        if let Some(score) = l.score {
            let _ = write!(s, " {:.*}", p.max(4), score);
        }
        s.push('\n');
    }
    s
}

/// Projection and rectification matrices from a KITTI calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub projections: [Option<Matrix3x4<f64>>; 4],
    pub r0_rect: Option<Matrix3<f64>>,
    pub velo_to_cam: Option<Matrix3x4<f64>>,
    /// Keys this reader does not interpret, kept verbatim.
    pub extra: BTreeMap<String, Vec<f64>>,
}

impl CalibrationSet {
    /// Calibration whose P2 is `[K | 0]`.
    pub fn from_intrinsics(k: &CameraIntrinsics) -> Self {
        let mut p2 = Matrix3x4::zeros();
        p2.fixed_view_mut::<3, 3>(0, 0).copy_from(&k.matrix());
        Self {
            projections: [None, None, Some(p2), None],
            r0_rect: None,
            velo_to_cam: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn p2(&self) -> &Matrix3x4<f64> {
        self.projections[2]
            .as_ref()
            .expect("P2 presence is checked at parse time")
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, GeometryError> {
        let p = self.p2();
        CameraIntrinsics::with_skew(p[(0, 0)], p[(1, 1)], p[(0, 2)], p[(1, 2)], p[(0, 1)])
    }
}

const PROJECTION_KEYS: [&str; 4] = ["P0", "P1", "P2", "P3"];

pub fn parse_calib_file(text: impl AsRef<[u8]>) -> Result<CalibrationSet, KittiError> {
    let text = as_text(text.as_ref())?;
    let mut calib = CalibrationSet {
        projections: [None; 4],
        r0_rect: None,
        velo_to_cam: None,
        extra: BTreeMap::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let Some((key, rest)) = raw.split_once(':') else {
            return Err(KittiError::MalformedLine {
                line,
                found: raw.split_whitespace().count(),
                expected: "KEY: values",
                token: None,
            });
        };
        let key = key.trim();
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        let expected = match key {
            "R0_rect" | "R_rect" => 9,
            k if PROJECTION_KEYS.contains(&k) || k == "Tr_velo_to_cam" || k == "Tr_velo_cam" => 12,
            _ => 0,
        };
        let values = tokens
            .iter()
            .map(|t| number(line, "value", t, tokens.len(), "numeric values"))
            .collect::<Result<Vec<f64>, _>>()?;
        if expected != 0 && values.len() != expected {
            return Err(KittiError::MalformedLine {
                line,
                found: values.len(),
                expected: if expected == 9 { "9" } else { "12" },
                token: None,
            });
        }
        match key {
            "R0_rect" | "R_rect" => calib.r0_rect = Some(Matrix3::from_row_slice(&values)),
            "Tr_velo_to_cam" | "Tr_velo_cam" => {
                calib.velo_to_cam = Some(Matrix3x4::from_row_slice(&values))
            }
            k => match PROJECTION_KEYS.iter().position(|&p| p == k) {
                Some(i) => calib.projections[i] = Some(Matrix3x4::from_row_slice(&values)),
                None => {
                    calib.extra.insert(k.to_string(), values);
                }
            },
        }
    }
    let Some(p2) = calib.projections[2] else {
        return Err(KittiError::MissingKey("P2"));
    };
    if !(p2[(0, 0)] > 0.0 && p2[(1, 1)] > 0.0) {
        return Err(KittiError::InvalidValue {
            line: 0,
            field: "P2",
            reason: "focal lengths must be positive",
        });
    }
    Ok(calib)
}

/// Formats like C's `%.{prec}e`: `7.215377e+02`.
fn sci(v: f64, prec: usize) -> String {
    let s = format!("{v:.prec$e}");
    let (mantissa, exp) = s
        .split_once('e')
        .expect("`e` formatting always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    format!(
        "{mantissa}e{}{:02}",
        if exp < 0 { '-' } else { '+' },
        exp.abs()
    )
}

fn row_major_line(key: &str, values: impl Iterator<Item = f64>) -> String {
    let body: Vec<String> = values.map(|v| sci(v, 12)).collect();
    if body.is_empty() {
        format!("{key}:\n")
    } else {
        format!("{key}: {}\n", body.join(" "))
    }
}

fn rows_3x4(m: &Matrix3x4<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..3).flat_map(move |r| (0..4).map(move |c| m[(r, c)]))
}

pub fn write_calib_file(calib: &CalibrationSet) -> String {
    let mut s = String::new();
    for (key, p) in PROJECTION_KEYS.iter().zip(&calib.projections) {
        if let Some(p) = p {
            s += &row_major_line(key, rows_3x4(p));
        }
    }
    if let Some(r) = &calib.r0_rect {
        s += &row_major_line(
            "R0_rect",
            (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])),
        );
    }
    if let Some(t) = &calib.velo_to_cam {
        s += &row_major_line("Tr_velo_to_cam", rows_3x4(t));
    }
    for (k, v) in &calib.extra {
        s += &row_major_line(k, v.iter().copied());
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryPose {
    pub frame_index: usize,
    /// Row-major `[R | t]`, camera-to-reference.
    pub matrix: Matrix3x4<f64>,
}

impl OdometryPose {
    /// The rotation block snapped onto the nearest exact rotation; pose files
    /// carry about seven significant digits.
    pub fn rotation(&self) -> RotationMatrix {
        RotationMatrix::nearest(self.matrix.fixed_view::<3, 3>(0, 0).into_owned())
            .expect("rotation block is validated at parse time")
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.column(3).into_owned()
    }
}

pub fn parse_odometry_poses(text: impl AsRef<[u8]>) -> Result<Vec<OdometryPose>, KittiError> {
    let text = as_text(text.as_ref())?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 12 {
            return Err(KittiError::MalformedLine {
                line,
                found: tokens.len(),
                expected: "12",
                token: None,
            });
        }
        let vals = tokens
            .iter()
            .map(|t| number(line, "pose", t, 12, "12"))
            .collect::<Result<Vec<f64>, _>>()?;
        let matrix = Matrix3x4::from_row_slice(&vals);
        let rot = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let defect = orthogonality_defect(&rot);
        if !(defect <= POSE_ROTATION_TOLERANCE) || rot.determinant() <= 0.0 {
            return Err(KittiError::NotARotation { line, defect });
        }
        out.push(OdometryPose {
            frame_index: out.len(),
            matrix,
        });
    }
    Ok(out)
}

pub fn write_odometry_poses(poses: &[OdometryPose]) -> String {
    let mut s = String::new();
    for p in poses {
        let row: Vec<String> = rows_3x4(&p.matrix).map(|v| sci(v, 9)).collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s
}

/// KITTI difficulty strata. Ordered from least to most permissive, so a bin
/// used as an evaluation filter admits every label whose own bin is `<=` it;
/// evaluating at `Ignored` therefore admits all labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DifficultyBin {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl DifficultyBin {
    pub const GRADED: [DifficultyBin; 3] = [
        DifficultyBin::Easy,
        DifficultyBin::Moderate,
        DifficultyBin::Hard,
    ];

    pub fn admits(self, label_bin: DifficultyBin) -> bool {
        label_bin <= self
    }

    pub fn name(self) -> &'static str {
        match self {
            DifficultyBin::Easy => "easy",
            DifficultyBin::Moderate => "moderate",
            DifficultyBin::Hard => "hard",
            DifficultyBin::Ignored => "all",
        }
    }
}

/// Minimum box height (px), maximum occlusion level and maximum truncation
/// for Easy, Moderate and Hard.
pub const MIN_BOX_HEIGHT: [f64; 3] = [40.0, 25.0, 25.0];
pub const MAX_OCCLUSION: [i32; 3] = [0, 1, 2];
pub const MAX_TRUNCATION: [f64; 3] = [0.15, 0.30, 0.50];

pub fn difficulty_of(label: &ObjectLabel) -> DifficultyBin {
    let height = label.bbox.height();
    if label.occluded < 0 || label.truncated < 0.0 {
        return DifficultyBin::Ignored;
    }
    for (i, bin) in DifficultyBin::GRADED.iter().enumerate() {
        if height >= MIN_BOX_HEIGHT[i]
            && label.occluded <= MAX_OCCLUSION[i]
            && label.truncated <= MAX_TRUNCATION[i]
        {
            return *bin;
        }
    }
    DifficultyBin::Ignored
}
