use rayon::prelude::*;

use super::{DictionaryPair, SparseCode, SparseConfig};
use crate::error::{Error, Result};
use crate::imagecore::{
    assemble_patches, downsample, extract_patch, upsample, LumaImage, PatchGrid,
};

pub fn patch_mean(p: &[f64]) -> f64 {
    p.iter().sum::<f64>() / p.len() as f64
}

/// Co-located `(observation, target)` training vectors from one
/// ground-truth image.
///
/// The observation is the bicubic re-interpolation of the image's own
/// downsampled version, so both vectors live on the high-resolution grid.
/// Both have the observation's patch mean removed. Patches whose
/// observation standard deviation is below `min_std` are skipped.
pub fn training_pairs(
    hr: &LumaImage,
    factor: usize,
    patch_size: usize,
    stride: usize,
    min_std: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let hr = hr.mod_crop(factor)?;
    let observed = upsample(&downsample(&hr, factor)?, factor)?;
    if patch_size > hr.height() || patch_size > hr.width() || stride == 0 {
        return Err(Error::invalid("training image too small for the patch size"));
    }
    let n = patch_size;
    let mut out = Vec::new();
    for r in (0..=hr.height() - n).step_by(stride) {
        for c in (0..=hr.width() - n).step_by(stride) {
            let mut y = extract_patch(&observed, r, c, n);
            let mu = patch_mean(&y);
            let var = y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / y.len() as f64;
            if var.sqrt() < min_std {
                continue;
            }
            y.iter_mut().for_each(|v| *v -= mu);
            let x = extract_patch(&hr, r, c, n).into_iter().map(|v| v - mu).collect();
            out.push((y, x));
        }
    }
    Ok(out)
}

/// Per-patch state of the external branch.
#[derive(Clone, Debug)]
pub struct CscResult {
    /// Overlap-averaged reconstruction, not clamped.
    pub image: LumaImage,
    pub codes: Vec<SparseCode>,
    /// Patch means of the interpolated observation.
    pub means: Vec<f64>,
    /// Mean-removed observation patches.
    pub observations: Vec<Vec<f64>>,
    /// Reconstructed patches `D_h a + mean`.
    pub patches: Vec<Vec<f64>>,
}

/// Code every observation patch of the bicubic-interpolated input against
/// `D_l` and reconstruct through `D_h`. `grid` is laid out on the
/// interpolated (output-size) image.
pub fn csc_initialize(
    lr: &LumaImage,
    dict: &DictionaryPair,
    grid: &PatchGrid,
    config: &SparseConfig,
) -> Result<CscResult> {
    let factor = dict.factor();
    let interpolated = upsample(lr, factor)?;
    check_geometry(&interpolated, dict, grid)?;
    let n = grid.patch_size();
    let origins: Vec<_> = grid.origins().collect();
    let per_patch: Vec<Result<(SparseCode, f64, Vec<f64>, Vec<f64>)>> = origins
        .par_iter()
        .map(|&(r, c)| {
            let mut y = extract_patch(&interpolated, r, c, n);
            let mu = patch_mean(&y);
            y.iter_mut().for_each(|v| *v -= mu);
            let code = dict
                .coupled_problem(&y, 1.0, None)
                .solve(config.lambda, &config.solver)?;
            let hr = code.reconstruct(dict.high()).into_iter().map(|v| v + mu).collect();
            Ok((code, mu, y, hr))
        })
        .collect();
    let mut codes = Vec::with_capacity(origins.len());
    let mut means = Vec::with_capacity(origins.len());
    let mut observations = Vec::with_capacity(origins.len());
    let mut patches = Vec::with_capacity(origins.len());
    for item in per_patch {
        let (code, mu, y, hr) = item?;
        codes.push(code);
        means.push(mu);
        observations.push(y);
        patches.push(hr);
    }
    let image = assemble_patches(&patches, grid)?;
    Ok(CscResult {
        image,
        codes,
        means,
        observations,
        patches,
    })
}

pub(crate) fn check_geometry(
    interpolated: &LumaImage,
    dict: &DictionaryPair,
    grid: &PatchGrid,
) -> Result<()> {
    let n = grid.patch_size();
    if dict.patch_size() != n || dict.low_dim() != n * n || dict.high_dim() != n * n {
        return Err(Error::invalid(format!(
            "dictionary is for {0}x{0} patches ({1}/{2} dims) but the grid uses {n}x{n}",
            dict.patch_size(),
            dict.low_dim(),
            dict.high_dim()
        )));
    }
    if grid.image_dims() != interpolated.dims() {
        return Err(Error::invalid(format!(
            "grid covers {:?} but the interpolated image is {:?}",
            grid.image_dims(),
            interpolated.dims()
        )));
    }
    Ok(())
}

/// Standalone coupled-sparse-coding super-resolution.
pub fn csc_upscale(
    lr: &LumaImage,
    dict: &DictionaryPair,
    overlap: usize,
    config: &SparseConfig,
) -> Result<LumaImage> {
    let f = dict.factor();
    let grid = PatchGrid::new(lr.height() * f, lr.width() * f, dict.patch_size(), overlap)?;
    Ok(csc_initialize(lr, dict, &grid, config)?.image.clamped())
}
