//! `.flo` flow files, grayscale image input and PNG output.
//!
//! `.flo` layout, little-endian: the 4-byte tag `PIEH`, `i32` width, `i32`
//! height, then `height` rows of `width` interleaved `(f32 u, f32 v)` pairs.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{FlowError, Result};
use crate::grid::{FlowField, ScalarGrid};
use crate::scalar::{lit, to_f64, Scalar};

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";

/// Largest side accepted when reading `.flo` files.
pub const FLO_MAX_SIDE: i64 = 1 << 16;

/// Encodes a flow field as `.flo` bytes (components narrowed to `f32`).
pub fn encode_flo<T: Scalar>(v: &FlowField<T>) -> Vec<u8> {
    let (w, h) = v.dims();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (&a, &b) in v.vx.as_slice().iter().zip(v.vy.as_slice()) {
        out.extend_from_slice(&(to_f64(a) as f32).to_le_bytes());
        out.extend_from_slice(&(to_f64(b) as f32).to_le_bytes());
    }
    out
}

/// Decodes `.flo` bytes.
///
/// Unknown-flow sentinels (e.g. `1e10`) are kept as stored; non-finite
/// entries are rejected.
pub fn decode_flo<T: Scalar>(bytes: &[u8]) -> Result<FlowField<T>> {
    if bytes.len() < 12 {
        return Err(FlowError::FloFormat(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != FLO_MAGIC {
        return Err(FlowError::FloFormat(format!("bad magic tag {:?}", &bytes[..4])));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap()) as i64;
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap()) as i64;
    if w <= 0 || h <= 0 || w > FLO_MAX_SIDE || h > FLO_MAX_SIDE {
        return Err(FlowError::FloFormat(format!("implausible dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| FlowError::FloFormat("dimension overflow".into()))?;
    if bytes.len() < expected {
        return Err(FlowError::FloFormat(format!(
            "truncated data: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut vx = Vec::with_capacity(w * h);
    let mut vy = Vec::with_capacity(w * h);
    for chunk in bytes[12..expected].chunks_exact(8) {
        let a = f32::from_le_bytes(chunk[..4].try_into().unwrap());
        let b = f32::from_le_bytes(chunk[4..].try_into().unwrap());
        vx.push(lit::<T>(a as f64));
        vy.push(lit::<T>(b as f64));
    }
    FlowField::new(ScalarGrid::new(w, h, vx)?, ScalarGrid::new(w, h, vy)?)
}

pub fn write_flo<T: Scalar>(path: impl AsRef<Path>, v: &FlowField<T>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_flo(v))?;
    Ok(())
}

pub fn read_flo<T: Scalar>(path: impl AsRef<Path>) -> Result<FlowField<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_flo(&bytes)
}

/// Converts a decoded image to intensities in `[0, 1]`.
///
/// Color is reduced with luminance weights `0.299 R + 0.587 G + 0.114 B`.
pub fn image_to_grid<T: Scalar>(img: &DynamicImage) -> Result<ScalarGrid<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |r: f64, g: f64, b: f64| 0.299 * r + 0.587 * g + 0.114 * b;
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(g) => g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(g) => g
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgba8(g) => g
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgb16(g) => g
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 65535.0)
            .collect(),
        DynamicImage::ImageRgba16(g) => g
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 65535.0)
            .collect(),
        other => {
            return Err(FlowError::UnsupportedImage(format!("pixel layout {:?}", other.color())));
        }
    };
    ScalarGrid::new(w, h, values.into_iter().map(|v| lit(v.clamp(0.0, 1.0))).collect())
}

/// Reads a PNG or PGM/PPM image as normalized intensities.
pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ScalarGrid<T>> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| FlowError::UnsupportedImage(format!("{}: {e}", path.display())))?;
    image_to_grid(&img)
}

/// Encodes intensities in `[0, 1]` as an 8-bit grayscale image.
pub fn grid_to_gray<T: Scalar>(g: &ScalarGrid<T>) -> GrayImage {
    GrayImage::from_fn(g.width() as u32, g.height() as u32, |x, y| {
        let v = to_f64(g.get(x as usize, y as usize)).clamp(0.0, 1.0);
        image::Luma([(v * 255.0).round() as u8])
    })
}

pub fn write_gray_png(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_rgb_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
