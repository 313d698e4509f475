use crate::geometry::{GeometryError, Homography};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("sample count {got} does not match {width}x{height}x{channels}")]
    SizeMismatch {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("PNM codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        if data.len() != width * height * channels {
            return Err(RasterError::SizeMismatch {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, RasterError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[u8] {
        let i = (v * self.width + u) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Decodes binary PGM (P5) or PPM (P6).
    pub fn from_pnm(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(buf) => Self::new(w, h, 1, buf.into_raw()),
            other => Self::new(w, h, 3, other.into_rgb8().into_raw()),
        }
    }

    /// Encodes as P5 (one channel) or P6 (three channels).
    pub fn to_pnm(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Vec::new();
        let (subtype, color) = if self.channels == 1 {
            (
                PnmSubtype::Graymap(SampleEncoding::Binary),
                ExtendedColorType::L8,
            )
        } else {
            (
                PnmSubtype::Pixmap(SampleEncoding::Binary),
                ExtendedColorType::Rgb8,
            )
        };
        PnmEncoder::new(&mut out)
            .with_subtype(subtype)
            .write_image(&self.data, self.width as u32, self.height as u32, color)?;
        Ok(out)
    }

    /// Conventional file extension for [`Self::to_pnm`] output.
    pub fn pnm_extension(&self) -> &'static str {
        if self.channels == 1 {
            "pgm"
        } else {
            "ppm"
        }
    }
}

/// Source coordinates within this distance of an integer snap onto it, so
/// homographies equal to the identity up to rounding copy pixels exactly.
const SNAP: f64 = 1e-9;

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r
    } else {
        x
    }
}

/// Resamples `img` under `h`: output pixel `(u, v)` takes the bilinear sample
/// of the input at `H⁻¹ (u, v, 1)`. Sources outside the input take `fill`.
pub fn warp_image(
    img: &RasterImage,
    h: &Homography,
    fill: u8,
) -> Result<RasterImage, GeometryError> {
    let inv = h.inverse()?;
    let (w, ht, ch) = (img.width, img.height, img.channels);
    let mut data = vec![fill; img.data.len()];
    let (max_x, max_y) = ((w - 1) as f64, (ht - 1) as f64);
    for v in 0..ht {
        for u in 0..w {
            let Some((x, y)) = inv.apply(u as f64, v as f64) else {
                continue;
            };
            let (x, y) = (snap(x), snap(y));
            if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
                continue;
            }
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(ht - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let out = &mut data[(v * w + u) * ch..(v * w + u + 1) * ch];
            for (c, o) in out.iter_mut().enumerate() {
                let at = |xx: usize, yy: usize| img.data[(yy * w + xx) * ch + c] as f64;
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                *o = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(RasterImage {
        width: w,
        height: ht,
        channels: ch,
        data,
    })
}
