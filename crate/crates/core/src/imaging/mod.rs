//! Image-processing primitives shared by every pipeline stage.
//!
//! Everything here operates on [`ImageBuffer`], an owned row-major 8-bit
//! raster with one or three interleaved channels. Operations are pure
//! functions: they borrow their input and return a fresh buffer.

mod canny;
mod clahe;
mod color;
mod contour;
mod denoise;
mod homography;
pub mod io;
mod morph;

pub use canny::{canny, CannyParams};
pub use clahe::{clahe, equalize_global};
pub use color::{
    apply_gamma_to_value, hsv_to_rgb, rgb_to_hsv, rgb_to_hsv_value_stats, to_grayscale, ValueStats,
};
pub use contour::{
    approx_poly, convex_hull, find_contours, is_convex, min_area_rect, perimeter, polygon_area,
    signed_area, solidity, Contour,
};
pub use denoise::{denoise, denoise_with, NlmParams};
pub use homography::{estimate_homography, warp_perspective, Homography};
pub use morph::{
    connected_components, dilate, erode, morph_close, otsu_threshold, Component, Components,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("expected {expected} channel(s), got {actual}")]
    ChannelMismatch { expected: u8, actual: u8 },
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u8),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    LengthMismatch {
        width: usize,
        height: usize,
        channels: u8,
        actual: usize,
    },
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Owned 8-bit raster. `data.len() == width * height * channels`.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: u8,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    /// Zero-filled image.
    pub fn new(width: usize, height: usize, channels: u8) -> Result<Self, ImagingError> {
        Self::filled(width, height, channels, 0)
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: u8,
        value: u8,
    ) -> Result<Self, ImagingError> {
        check_shape(width, height, channels)?;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels as usize],
        })
    }

    pub fn from_raw(
        width: usize,
        height: usize,
        channels: u8,
        data: Vec<u8>,
    ) -> Result<Self, ImagingError> {
        check_shape(width, height, channels)?;
        if data.len() != width * height * channels as usize {
            return Err(ImagingError::LengthMismatch {
                width,
                height,
                channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Three-channel image with every pixel set to `rgb`.
    pub fn from_rgb_fill(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let mut img = Self::new(width, height, 3)?;
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Ok(img)
    }

    pub fn from_fn_gray(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImagingError> {
        let mut img = Self::new(width, height, 1)?;
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        Ok(img)
    }

    pub fn from_fn_rgb(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImagingError> {
        let mut img = Self::new(width, height, 3)?;
        for y in 0..height {
            for x in 0..width {
                let i = (y * width + x) * 3;
                img.data[i..i + 3].copy_from_slice(&f(x, y));
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> u8 {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels as usize + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        let ch = self.channels as usize;
        self.data[(y * self.width + x) * ch + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let ch = self.channels as usize;
        let i = (y * self.width + x) * ch;
        &self.data[i..i + ch]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let ch = self.channels as usize;
        let i = (y * self.width + x) * ch;
        &mut self.data[i..i + ch]
    }

    pub fn expect_channels(&self, expected: u8) -> Result<(), ImagingError> {
        if self.channels != expected {
            return Err(ImagingError::ChannelMismatch {
                expected,
                actual: self.channels,
            });
        }
        Ok(())
    }

    /// Copies the rectangle `[x0, x0+w) x [y0, y0+h)`. The rectangle must lie
    /// inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self, ImagingError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(ImagingError::InvalidDimensions {
                width: w,
                height: h,
            });
        }
        let ch = self.channels as usize;
        let mut data = Vec::with_capacity(w * h * ch);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * ch;
            data.extend_from_slice(&self.data[start..start + w * ch]);
        }
        Self::from_raw(w, h, self.channels, data)
    }

    /// Gray view of any image: returns a clone for 1-channel input.
    pub fn to_gray(&self) -> Self {
        match self.channels {
            1 => self.clone(),
            _ => to_grayscale(self).expect("3-channel input"),
        }
    }

    /// Replicates a gray image into three channels.
    pub fn gray_to_rgb(&self) -> Result<Self, ImagingError> {
        self.expect_channels(1)?;
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self::from_raw(self.width, self.height, 3, data)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self
            .data
            .iter()
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / self.data.len().max(1) as f64;
        var.sqrt()
    }

    /// Bilinear sample at sub-pixel `(x, y)` where pixel centers sit on
    /// integer coordinates. Points within half a pixel of the border clamp to
    /// it; anything farther out is `None`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= -0.5 && y >= -0.5 && x <= max_x + 0.5 && y <= max_y + 0.5) {
            return None;
        }
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0, c) as f64;
        let p10 = self.get(x1, y0, c) as f64;
        let p01 = self.get(x0, y1, c) as f64;
        let p11 = self.get(x1, y1, c) as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        Some(top + (bottom - top) * fy)
    }
}

fn check_shape(width: usize, height: usize, channels: u8) -> Result<(), ImagingError> {
    if width == 0 || height == 0 {
        return Err(ImagingError::InvalidDimensions { width, height });
    }
    if channels != 1 && channels != 3 {
        return Err(ImagingError::UnsupportedChannels(channels));
    }
    Ok(())
}

/// Sub-pixel point; pixel centers are at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

#[inline]
pub(crate) fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
