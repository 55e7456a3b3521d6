//! Grayscale image container and the low-level raster operations shared by
//! the film-handling and matching stages.
//!
//! Images hold `f32` intensities, normally in `[0, 1]`. `NaN` marks pixels
//! with no data (outside the exposed film area, unfilled warp output). Pixel
//! coordinates use the corner convention: integer coordinates at pixel
//! corners, cell centers at `+0.5`.

mod filter;
mod fourier;
mod matching;
mod tiffio;
mod warp;

pub use filter::{area_downscale, gaussian_blur, sliding_median};
pub use fourier::phase_correlate;
pub use matching::{ncc_match, NccMatch};
pub use warp::warp_into;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{width}x{height} image does not match buffer of {len} values")]
    DimensionMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("images must have identical dimensions ({0}x{1} vs {2}x{3})")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("template {0}x{1} does not fit in search window {2}x{3}")]
    TemplateTooLarge(usize, usize, usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tiff(#[from] tiff::TiffError),
    #[error("unsupported image format: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![f32::NAN; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::DimensionMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.width)
    }

    /// Bilinear sample at a continuous pixel coordinate. `None` outside the
    /// grid of cell centers or when any support pixel is `NaN`. Neighbors
    /// with zero weight are not required, so the full closed center grid
    /// `[0.5, width - 0.5] x [0.5, height - 0.5]` is sampleable.
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        let cx = x - 0.5;
        let cy = y - 0.5;
        let i0 = cx.floor();
        let j0 = cy.floor();
        let fx = (cx - i0) as f32;
        let fy = (cy - j0) as f32;
        let (i0, j0) = (i0 as i64, j0 as i64);
        if i0 < 0 || j0 < 0 {
            return None;
        }
        let i1 = if fx > 0.0 { i0 + 1 } else { i0 };
        let j1 = if fy > 0.0 { j0 + 1 } else { j0 };
        if i1 >= self.width as i64 || j1 >= self.height as i64 {
            return None;
        }
        let (i0, j0, i1, j1) = (i0 as usize, j0 as usize, i1 as usize, j1 as usize);
        let v00 = self.get(i0, j0);
        let v10 = self.get(i1, j0);
        let v01 = self.get(i0, j1);
        let v11 = self.get(i1, j1);
        let v = v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy;
        v.is_finite().then_some(v)
    }

    /// Crop a rectangle; out-of-bounds parts are filled with `NaN`.
    pub fn crop(&self, x0: i64, y0: i64, width: usize, height: usize) -> GrayImage {
        GrayImage::from_fn(width, height, |c, r| {
            let sc = x0 + c as i64;
            let sr = y0 + r as i64;
            if sc >= 0 && sr >= 0 && (sc as usize) < self.width && (sr as usize) < self.height {
                self.get(sc as usize, sr as usize)
            } else {
                f32::NAN
            }
        })
    }

    /// Mean and standard deviation of the finite pixels.
    pub fn mean_std(&self) -> (f32, f32) {
        let mut n = 0usize;
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for &v in &self.data {
            if v.is_finite() {
                n += 1;
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
        }
        if n == 0 {
            return (f32::NAN, f32::NAN);
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        (mean as f32, var.sqrt() as f32)
    }

    /// Write as 8-bit grayscale TIFF; intensities are clamped to `[0, 1]`
    /// and scaled to 0..255. `NaN` maps to 0.
    pub fn write_tiff_u8(&self, path: &std::path::Path) -> Result<(), ImageError> {
        tiffio::write_u8(self, path)
    }

    /// Write as 32-bit float TIFF, preserving exact values.
    pub fn write_tiff_f32(&self, path: &std::path::Path) -> Result<(), ImageError> {
        tiffio::write_f32(self, path)
    }

    /// Read a grayscale TIFF. 8- and 16-bit samples are normalized to
    /// `[0, 1]`; float samples are taken as stored.
    pub fn read_tiff(path: &std::path::Path) -> Result<Self, ImageError> {
        tiffio::read(path)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_center_convention() {
        let img = GrayImage::from_fn(6, 4, |c, _| c as f32);
        // At a cell center the sample equals the cell value.
        assert_eq!(img.sample(2.5, 1.5), Some(2.0));
        // Halfway between two centers: average.
        assert_eq!(img.sample(3.0, 1.5), Some(2.5));
        // The closed center grid includes the last column's centers.
        assert_eq!(img.sample(5.5, 1.5), Some(5.0));
        // Outside the center grid there is no full support.
        assert_eq!(img.sample(0.4, 1.5), None);
        assert_eq!(img.sample(5.6, 1.5), None);
    }

    #[test]
    fn bilinear_reproduces_linear_ramp() {
        let img = GrayImage::from_fn(8, 8, |c, r| 0.25 * c as f32 + 0.5 * r as f32 + 1.0);
        for (x, y) in [(2.2, 3.7), (4.9, 1.1), (6.0, 6.0)] {
            let expect = 0.25 * (x - 0.5) + 0.5 * (y - 0.5) + 1.0;
            let got = img.sample(x, y).unwrap() as f64;
            assert!((got - expect).abs() < 1e-5, "at ({x},{y}): {got} vs {expect}");
        }
    }

    #[test]
    fn nan_poisons_support() {
        let mut img = GrayImage::from_fn(4, 4, |c, r| (c + r) as f32);
        img.set(2, 2, f32::NAN);
        assert!(img.sample(2.2, 2.2).is_none());
        assert!(img.sample(1.2, 1.2).is_some());
    }

    #[test]
    fn crop_pads_with_nan() {
        let img = GrayImage::from_fn(4, 4, |c, r| (r * 4 + c) as f32);
        let cut = img.crop(-1, 2, 3, 3);
        assert!(cut.get(0, 0).is_nan());
        assert_eq!(cut.get(1, 0), 8.0);
        assert!(cut.get(1, 2).is_nan());
    }

    #[test]
    fn mean_std_ignores_nan() {
        let mut img = GrayImage::from_fn(3, 1, |c, _| c as f32);
        let (m, s) = img.mean_std();
        assert!((m - 1.0).abs() < 1e-6);
        assert!((s - (2.0f32 / 3.0).sqrt()).abs() < 1e-6);
        img.set(2, 0, f32::NAN);
        let (m2, _) = img.mean_std();
        assert!((m2 - 0.5).abs() < 1e-6);
    }
}
