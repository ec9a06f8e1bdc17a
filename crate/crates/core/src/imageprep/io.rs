//! PNG and raw float-raster file formats.
//!
//! A float raster is stored as two files: the samples as little-endian `f32`
//! in row-major order, and a JSON sidecar next to it (same stem, `.json`
//! extension) holding `{"height":H,"width":W,"channels":C}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::{ImageError, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloatRasterHeader {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// Path of the JSON sidecar belonging to a raw float raster file.
pub fn sidecar_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("json")
}

pub fn save_float_raster(path: impl AsRef<Path>, raster: &Raster<f32>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let header = FloatRasterHeader {
        height: raster.height(),
        width: raster.width(),
        channels: raster.channels(),
    };
    let bytes: Vec<u8> = raster.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string(&header)?)?;
    Ok(())
}

pub fn load_float_raster(path: impl AsRef<Path>) -> Result<Raster<f32>, ImageError> {
    let path = path.as_ref();
    let header: FloatRasterHeader = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(ImageError::Unsupported(format!(
            "{} is {} bytes, not a whole number of f32 samples",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Raster::new(header.height, header.width, header.channels, data)
}

/// Loads a PNG as 8-bit grayscale (1 channel) or RGB (3 channels). Alpha is
/// dropped and 16-bit images are reduced to 8 bits.
pub fn load_png(path: impl AsRef<Path>) -> Result<Raster<u8>, ImageError> {
    let img = image::open(path.as_ref())?;
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        Raster::new(h as usize, w as usize, 1, g.into_raw())
    } else {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Raster::new(h as usize, w as usize, 3, rgb.into_raw())
    }
}

pub fn save_png(path: impl AsRef<Path>, raster: &Raster<u8>) -> Result<(), ImageError> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let data = raster.data().to_vec();
    match raster.channels() {
        1 => GrayImage::from_raw(w, h, data)
            .ok_or_else(|| ImageError::Unsupported("grayscale buffer size".into()))?
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?,
        3 => RgbImage::from_raw(w, h, data)
            .ok_or_else(|| ImageError::Unsupported("rgb buffer size".into()))?
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?,
        c => return Err(ImageError::Channels(c)),
    }
    Ok(())
}
