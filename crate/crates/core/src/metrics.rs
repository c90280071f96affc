//! PSNR and SSIM on the luminance channel, measured on the 8-bit scale.

use crate::error::{Error, Result};
use crate::imagecore::LumaImage;

/// Peak value of the 8-bit scale both metrics are reported on.
pub const PEAK: f64 = 255.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    /// Decibels; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
    pub border_shave: usize,
}

fn shaved(a: &LumaImage, b: &LumaImage, shave: usize) -> Result<(LumaImage, LumaImage)> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "cannot compare {:?} with {:?} images",
            a.dims(),
            b.dims()
        )));
    }
    let (h, w) = a.dims();
    if 2 * shave >= h || 2 * shave >= w {
        return Err(Error::invalid(format!(
            "border shave {shave} leaves nothing of a {h}x{w} image"
        )));
    }
    let (hh, ww) = (h - 2 * shave, w - 2 * shave);
    Ok((
        a.crop(shave, shave, hh, ww)?.map(|v| v * PEAK),
        b.crop(shave, shave, hh, ww)?.map(|v| v * PEAK),
    ))
}

pub fn psnr(a: &LumaImage, b: &LumaImage, shave: usize) -> Result<f64> {
    let (a, b) = shaved(a, b, shave)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering: output shrinks by `window - 1` per axis.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            let row = &data[r * w + c..r * w + c + SSIM_WINDOW];
            tmp[r * ow + c] = row.iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * tmp[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), evaluated at every
/// position where the window fits inside the shaved image.
pub fn ssim(a: &LumaImage, b: &LumaImage, shave: usize) -> Result<f64> {
    let (a, b) = shaved(a, b, shave)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels after shaving, got {h}x{w}"
        )));
    }
    let k = gaussian_window();
    let (da, db) = (a.data(), b.data());
    let aa: Vec<f64> = da.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = db.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = da.iter().zip(db).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(da, h, w, &k);
    let mu_b = filter_valid(db, h, w, &k);
    let e_aa = filter_valid(&aa, h, w, &k);
    let e_bb = filter_valid(&bb, h, w, &k);
    let e_ab = filter_valid(&ab, h, w, &k);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn evaluate(estimate: &LumaImage, truth: &LumaImage, shave: usize) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(estimate, truth, shave)?,
        ssim: ssim(estimate, truth, shave)?,
        border_shave: shave,
    })
}
