use image::RgbImage;

use super::{upsample, LumaImage};
use crate::error::Result;

/// Full-range BT.601 luma plus chroma planes, all in `[0, 1]` with neutral
/// chroma at `0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub luma: LumaImage,
    pub cb: LumaImage,
    pub cr: LumaImage,
}

#[inline]
fn to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        0.5 - 0.168_735_891_647_856 * r - 0.331_264_108_352_144 * g + 0.5 * b,
        0.5 + 0.5 * r - 0.418_687_589_158_345 * g - 0.081_312_410_841_655 * b,
    ]
}

#[inline]
fn to_rgb(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let (cb, cr) = (cb - 0.5, cr - 0.5);
    [
        y + 1.402 * cr,
        y - 0.344_136_286_201_022 * cb - 0.714_136_286_201_022 * cr,
        y + 1.772 * cb,
    ]
}

pub fn rgb_to_ycbcr(img: &RgbImage) -> ColorImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for (i, px) in img.pixels().enumerate() {
        let [r, g, b] = px.0.map(|v| v as f64 / 255.0);
        let ycc = to_ycbcr(r, g, b);
        for (plane, v) in planes.iter_mut().zip(ycc) {
            plane[i] = v;
        }
    }
    let [y, cb, cr] = planes.map(|p| LumaImage::new(h, w, p).expect("decoded image is nonempty"));
    ColorImage { luma: y, cb, cr }
}

pub fn ycbcr_to_rgb(img: &ColorImage) -> RgbImage {
    let (h, w) = img.luma.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let rgb = to_rgb(img.luma.data()[i], img.cb.data()[i], img.cr.data()[i]);
        image::Rgb(rgb.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

impl ColorImage {
    pub fn dims(&self) -> (usize, usize) {
        self.luma.dims()
    }

    /// Replace luma with `luma` and bicubic-interpolate the chroma planes.
    pub fn with_upscaled_luma(&self, luma: LumaImage, factor: usize) -> Result<ColorImage> {
        Ok(ColorImage {
            luma,
            cb: upsample(&self.cb, factor)?.clamped(),
            cr: upsample(&self.cr, factor)?.clamped(),
        })
    }
}
