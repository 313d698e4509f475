//! Binary tensor container: 4-byte magic, then `c`, `h`, `w` as little-endian
//! `u32`, then `c·h·w` little-endian `f32` samples in channel-major order.

use super::{FeatureTensor, LossError};
use serde::Serialize;
use thiserror::Error;

pub const TENSOR_MAGIC: [u8; 4] = *b"FTNS";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContainerError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("truncated container: {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
    #[error(transparent)]
    Tensor(#[from] LossError),
}

pub fn write_tensor(t: &FeatureTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    for d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_tensor(bytes: &[u8]) -> Result<FeatureTensor, ContainerError> {
    if bytes.len() < HEADER_LEN {
        return Err(ContainerError::Truncated {
            got: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("slice of length 4");
    if magic != TENSOR_MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let dim = |i: usize| {
        u32::from_le_bytes(
            bytes[4 + 4 * i..8 + 4 * i]
                .try_into()
                .expect("slice of length 4"),
        ) as usize
    };
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let expected = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(ContainerError::Truncated {
            got: bytes.len(),
            expected,
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of length 4")) as f64)
        .collect();
    Ok(FeatureTensor::new(c, h, w, data)?)
}

#[derive(Serialize)]
struct Metadata<'a> {
    magic: &'a str,
    channels: usize,
    height: usize,
    width: usize,
    dtype: &'a str,
    layout: &'a str,
}

/// JSON sidecar describing a container written by [`write_tensor`].
pub fn tensor_metadata_json(t: &FeatureTensor) -> String {
    let [c, h, w] = t.shape();
    serde_json::to_string_pretty(&Metadata {
        magic: "FTNS",
        channels: c,
        height: h,
        width: w,
        dtype: "f32le",
        layout: "chw",
    })
    .expect("plain struct serializes")
}
