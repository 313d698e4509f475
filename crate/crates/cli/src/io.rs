use crate::error::CliError;
use std::path::{Path, PathBuf};
use tiltkit_core::kitti::{parse_calib_file, parse_label_file, CalibrationSet};
use tiltkit_core::ObjectLabel;

pub fn require_dir(path: &Path) -> Result<(), CliError> {
    let meta = std::fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if meta.is_dir() {
        Ok(())
    } else {
        Err(CliError::input(path, "not a directory"))
    }
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    let meta = std::fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if meta.is_file() {
        Ok(())
    } else {
        Err(CliError::input(path, "not a regular file"))
    }
}

/// `(frame_id, path)` for every `*.txt` in `dir`, sorted by frame id.
pub fn list_frames(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    require_dir(dir)?;
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                frames.push((stem.to_string(), path));
            }
        }
    }
    frames.sort();
    Ok(frames)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<ObjectLabel>, CliError> {
    parse_label_file(read_bytes(path)?).map_err(|e| CliError::input(path, e))
}

pub fn read_calib(path: &Path) -> Result<CalibrationSet, CliError> {
    parse_calib_file(read_bytes(path)?).map_err(|e| CliError::input(path, e))
}

/// Writes to `dest`, or to stdout when absent.
pub fn emit(dest: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    use std::io::Write;
    match dest {
        Some(p) => write_bytes(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}
