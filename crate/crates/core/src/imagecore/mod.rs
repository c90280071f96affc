//! Luminance images, colour conversion, resampling and overlapping patch
//! grids. Everything downstream works on [`LumaImage`] with intensities in
//! `[0, 1]`.

mod color;
mod io;
mod patch;
mod resample;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb, ColorImage};
pub use io::{read_color, read_luma, write_color, write_luma};
pub use patch::{assemble_patches, extract_patch, extract_patches, PatchGrid};
pub use resample::{
    downsample, gaussian_sigma, reflect_index, smooth_input, upsample, validate_factor,
};

use crate::error::{Error, Result};

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct LumaImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl LumaImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be at least 1x1, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "{height}x{width} image needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite samples"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Sample with reflected borders, so any signed coordinate is valid.
    #[inline]
    pub fn get_reflect(&self, row: isize, col: isize) -> f64 {
        self.get(
            reflect_index(row, self.height),
            reflect_index(col, self.width),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || row + height > self.height || col + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({row},{col}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| self.get(row + r, col + c)))
    }

    /// Crop so both dimensions are multiples of `factor`.
    pub fn mod_crop(&self, factor: usize) -> Result<Self> {
        let h = self.height - self.height % factor;
        let w = self.width - self.width % factor;
        self.crop(0, 0, h, w)
    }
}
