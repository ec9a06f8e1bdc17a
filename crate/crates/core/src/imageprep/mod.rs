//! Image normalization: rasters, cropping, resizing, pixel rescaling, ROI
//! extraction and the coordinate maps between original and normalized frames.

mod io;

pub use io::{
    load_float_raster, load_png, save_float_raster, save_png, sidecar_path, FloatRasterHeader,
};

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::{MASK_BACKGROUND, MASK_FOREGROUND};

/// Side of the square frame every classifier/localizer input is normalized to.
pub const NORMALIZED_SIZE: usize = 299;
/// Side of the intermediate frame the optic-disc ROI is cut from.
pub const ROI_SOURCE_SIZE: usize = 800;
/// Side of the optic-disc ROI.
pub const ROI_SIZE: usize = 224;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("raster data has {actual} values, expected {height}x{width}x{channels} = {expected}")]
    DataLength {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("raster must have 1 or 3 channels, got {0}")]
    Channels(usize),
    #[error("empty raster ({height}x{width})")]
    Empty { height: usize, width: usize },
    #[error("resize target must be at least 1x1, got {height}x{width}")]
    ZeroTarget { height: usize, width: usize },
    #[error("expected a {expected_h}x{expected_w} raster, got {height}x{width}")]
    Dimensions {
        expected_h: usize,
        expected_w: usize,
        height: usize,
        width: usize,
    },
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("unsupported image layout: {0}")]
    Unsupported(String),
}

/// Pixel sample types a [`Raster`] can hold.
pub trait Sample: Copy + PartialEq + Default + std::fmt::Debug + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Sample for u8 {
    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    /// Rounds half-up and saturates to `0..=255`.
    fn from_f64(v: f64) -> Self {
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    }
}

impl Sample for f32 {
    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

/// Row-major `height x width x channels` pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

pub type ByteRaster = Raster<u8>;
pub type FloatRaster = Raster<f32>;

impl<T: Sample> Raster<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self, ImageError> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a raster by evaluating `f(row, col, channel)` for every sample.
    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    #[inline]
    fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: T) {
        let i = self.index(y, x, c);
        self.data[i] = value;
    }

    /// All channels of pixel `(y, x)`.
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let i = self.index(y, x, 0);
        &self.data[i..i + self.channels]
    }

    /// Copies the window with top-left `(x0, y0)` and size `w x h`; the window
    /// must lie inside the raster.
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "window out of bounds");
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = self.index(y, x0, 0);
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Self {
            height: h,
            width: w,
            channels: self.channels,
            data,
        }
    }

    /// Mirrors columns: `x -> width - 1 - x`.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Raster<u8> {
    /// True when every sample is 0 or 255.
    pub fn is_binary(&self) -> bool {
        self.data
            .iter()
            .all(|&v| v == MASK_FOREGROUND || v == MASK_BACKGROUND)
    }

    /// Number of foreground (value 0) samples.
    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == MASK_FOREGROUND).count()
    }
}

/// Offset-then-scale map from an original frame into a normalized frame:
/// `forward(p) = ((p.x - off_x) * scale_x, (p.y - off_y) * scale_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub crop_offset_x: f64,
    pub crop_offset_y: f64,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl Default for FrameTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Original frame to normalized frame.
    Forward,
    /// Normalized frame back to the original frame.
    Inverse,
}

impl FrameTransform {
    pub const IDENTITY: Self = Self {
        crop_offset_x: 0.0,
        crop_offset_y: 0.0,
        scale_x: 1.0,
        scale_y: 1.0,
    };

    pub fn crop(offset_x: f64, offset_y: f64) -> Self {
        Self {
            crop_offset_x: offset_x,
            crop_offset_y: offset_y,
            ..Self::IDENTITY
        }
    }

    pub fn scale(scale_x: f64, scale_y: f64) -> Self {
        Self {
            scale_x,
            scale_y,
            ..Self::IDENTITY
        }
    }

    pub fn is_valid(&self) -> bool {
        self.crop_offset_x.is_finite()
            && self.crop_offset_y.is_finite()
            && self.scale_x.is_finite()
            && self.scale_y.is_finite()
            && self.scale_x > 0.0
            && self.scale_y > 0.0
    }

    /// The transform equivalent to applying `self` and then `next`.
    pub fn then(&self, next: &FrameTransform) -> FrameTransform {
        FrameTransform {
            crop_offset_x: self.crop_offset_x + next.crop_offset_x / self.scale_x,
            crop_offset_y: self.crop_offset_y + next.crop_offset_y / self.scale_y,
            scale_x: self.scale_x * next.scale_x,
            scale_y: self.scale_y * next.scale_y,
        }
    }

    pub fn forward(&self, p: Point) -> Point {
        Point::new(
            (p.x - self.crop_offset_x) * self.scale_x,
            (p.y - self.crop_offset_y) * self.scale_y,
        )
    }

    pub fn inverse(&self, p: Point) -> Point {
        Point::new(
            p.x / self.scale_x + self.crop_offset_x,
            p.y / self.scale_y + self.crop_offset_y,
        )
    }
}

pub fn map_point(transform: &FrameTransform, p: Point, direction: Direction) -> Point {
    match direction {
        Direction::Forward => transform.forward(p),
        Direction::Inverse => transform.inverse(p),
    }
}

/// Crops the largest centered square; the offset on the long axis is
/// `floor((dim - side) / 2)`.
pub fn center_square_crop<T: Sample>(img: &Raster<T>) -> Result<(Raster<T>, FrameTransform), ImageError> {
    if img.is_empty() {
        return Err(ImageError::Empty {
            height: img.height,
            width: img.width,
        });
    }
    let side = img.height.min(img.width);
    let off_x = (img.width - side) / 2;
    let off_y = (img.height - side) / 2;
    let cropped = if side == img.width && side == img.height {
        img.clone()
    } else {
        img.window(off_x, off_y, side, side)
    };
    Ok((cropped, FrameTransform::crop(off_x as f64, off_y as f64)))
}

/// Source coordinate sampled by output index `i` when resizing `input -> output`
/// samples, with the first and last pixel centers aligned.
#[inline]
fn source_coord(i: usize, input: usize, output: usize) -> f64 {
    if output == 1 {
        (input - 1) as f64 / 2.0
    } else {
        (i * (input - 1)) as f64 / (output - 1) as f64
    }
}

/// Scale ratio recorded for a resize along one axis.
fn axis_scale(input: usize, output: usize) -> f64 {
    if input > 1 && output > 1 {
        (output - 1) as f64 / (input - 1) as f64
    } else {
        output as f64 / input as f64
    }
}

/// Bilinear resize with edge pixel centers aligned: output index `i` samples
/// source coordinate `i * (in - 1) / (out - 1)`.
pub fn resize<T: Sample>(img: &Raster<T>, out_h: usize, out_w: usize) -> Result<(Raster<T>, FrameTransform), ImageError> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::ZeroTarget {
            height: out_h,
            width: out_w,
        });
    }
    if img.is_empty() {
        return Err(ImageError::Empty {
            height: img.height,
            width: img.width,
        });
    }
    let transform = FrameTransform::scale(axis_scale(img.width, out_w), axis_scale(img.height, out_h));
    if out_h == img.height && out_w == img.width {
        return Ok((img.clone(), transform));
    }

    let cols: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|i| {
            let sx = source_coord(i, img.width, out_w);
            let x0 = sx.floor() as usize;
            (x0, (x0 + 1).min(img.width - 1), sx - x0 as f64)
        })
        .collect();

    let mut data = Vec::with_capacity(out_h * out_w * img.channels);
    for i in 0..out_h {
        let sy = source_coord(i, img.height, out_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = sy - y0 as f64;
        for &(x0, x1, fx) in &cols {
            for c in 0..img.channels {
                let top = lerp(img.get(y0, x0, c).to_f64(), img.get(y0, x1, c).to_f64(), fx);
                let bottom = lerp(img.get(y1, x0, c).to_f64(), img.get(y1, x1, c).to_f64(), fx);
                data.push(T::from_f64(lerp(top, bottom, fy)));
            }
        }
    }
    Ok((
        Raster {
            height: out_h,
            width: out_w,
            channels: img.channels,
            data,
        },
        transform,
    ))
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Center crop followed by a resize to `size x size`; the returned transform
/// maps original coordinates into the normalized frame.
pub fn normalize<T: Sample>(img: &Raster<T>, size: usize) -> Result<(Raster<T>, FrameTransform), ImageError> {
    let (square, crop) = center_square_crop(img)?;
    let (resized, scale) = resize(&square, size, size)?;
    Ok((resized, crop.then(&scale)))
}

/// Maps 8-bit values linearly onto `[-1, 1]`: `v / 127.5 - 1`.
pub fn rescale_pixels(img: &Raster<u8>) -> Raster<f32> {
    img.map(|v| (f64::from(v) / 127.5 - 1.0) as f32)
}

/// Cuts the 224x224 optic-disc ROI out of an 800x800 image. The center is
/// rounded half-up and the window is clamped to stay inside the image.
pub fn extract_roi<T: Sample>(img800: &Raster<T>, center: Point) -> Result<(Raster<T>, FrameTransform), ImageError> {
    if img800.height != ROI_SOURCE_SIZE || img800.width != ROI_SOURCE_SIZE {
        return Err(ImageError::Dimensions {
            expected_h: ROI_SOURCE_SIZE,
            expected_w: ROI_SOURCE_SIZE,
            height: img800.height,
            width: img800.width,
        });
    }
    if !center.is_finite() {
        return Err(ImageError::NonFinite {
            x: center.x,
            y: center.y,
        });
    }
    let x0 = roi_start(center.x);
    let y0 = roi_start(center.y);
    let roi = img800.window(x0, y0, ROI_SIZE, ROI_SIZE);
    Ok((roi, FrameTransform::crop(x0 as f64, y0 as f64)))
}

fn roi_start(c: f64) -> usize {
    let rounded = (c + 0.5).floor();
    let half = (ROI_SIZE / 2) as f64;
    let max_start = (ROI_SOURCE_SIZE - ROI_SIZE) as f64;
    (rounded - half).clamp(0.0, max_start) as usize
}
