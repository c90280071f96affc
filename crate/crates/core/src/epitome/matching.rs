use rayon::prelude::*;

use super::{train_epitome, Epitome, EpitomeConfig, EpitomeReport};
use crate::error::{Error, Result};
use crate::imagecore::{
    assemble_patches, extract_patch, smooth_input, upsample, validate_factor, LumaImage, PatchGrid,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    /// Patch origin in the smoothed input.
    pub origin: (usize, usize),
    /// `|Y'_mn - query|^2`.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub origin: (usize, usize),
    pub error: f64,
    /// Posterior mass of the most probable mapping; 0 for window search.
    pub weight: f64,
    /// Sorted by ascending error; the first entry is the chosen match.
    pub candidates: Vec<Candidate>,
}

fn ssd(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sorted_candidates(yp: &LumaImage, query: &[f64], n: usize, origins: &[(usize, usize)]) -> Vec<Candidate> {
    let mut c: Vec<Candidate> = origins
        .iter()
        .map(|&origin| Candidate {
            origin,
            error: ssd(&extract_patch(yp, origin.0, origin.1, n), query),
        })
        .collect();
    c.sort_by(|a, b| a.error.total_cmp(&b.error).then(a.origin.cmp(&b.origin)));
    c
}

/// Match `query` through the epitome: take the most probable mapping, then
/// the stored source candidate closest to the query.
pub fn epitomic_match(e: &Epitome, yp: &LumaImage, query: &[f64]) -> Result<MatchResult> {
    if yp.dims() != e.source_dims() {
        return Err(Error::invalid(format!(
            "epitome was trained on a {:?} image, got {:?}",
            e.source_dims(),
            yp.dims()
        )));
    }
    let (t, weight) = e.most_probable(query)?;
    let candidates = sorted_candidates(yp, query, e.patch_size(), e.candidates(t));
    let Some(best) = candidates.first().copied() else {
        return Err(Error::invalid("epitome has no stored candidates"));
    };
    Ok(MatchResult {
        origin: best.origin,
        error: best.error,
        weight,
        candidates,
    })
}

/// Exhaustive search over patch origins within `radius` of `center`
/// (clamped into the image). Ties go to the first origin in row-major order.
pub fn nn_match(yp: &LumaImage, query: &[f64], center: (usize, usize), radius: usize) -> Result<MatchResult> {
    let n = (query.len() as f64).sqrt() as usize;
    if n == 0 || n * n != query.len() {
        return Err(Error::invalid("query must be a non-empty square patch"));
    }
    let (h, w) = yp.dims();
    if n > h || n > w {
        return Err(Error::invalid(format!("{n}x{n} query does not fit a {h}x{w} image")));
    }
    let (cr, cc) = (center.0.min(h - n), center.1.min(w - n));
    let mut best: Option<Candidate> = None;
    for r in cr.saturating_sub(radius)..=(cr + radius).min(h - n) {
        for c in cc.saturating_sub(radius)..=(cc + radius).min(w - n) {
            let error = ssd(&extract_patch(yp, r, c, n), query);
            if best.is_none_or(|b| error < b.error) {
                best = Some(Candidate { origin: (r, c), error });
            }
        }
    }
    let best = best.expect("window contains the clamped centre");
    Ok(MatchResult {
        origin: best.origin,
        error: best.error,
        weight: 0.0,
        candidates: vec![best],
    })
}

/// `Y_mn - Y'_mn` at a source origin.
fn high_frequency(y: &LumaImage, yp: &LumaImage, origin: (usize, usize), n: usize) -> Vec<f64> {
    extract_patch(y, origin.0, origin.1, n)
        .into_iter()
        .zip(extract_patch(yp, origin.0, origin.1, n))
        .map(|(a, b)| a - b)
        .collect()
}

fn blend(query: &[f64], w: f64, he: &[f64], hnn: &[f64]) -> Vec<f64> {
    query
        .iter()
        .zip(he.iter().zip(hnn))
        .map(|(q, (a, b))| q + w * a + (1.0 - w) * b)
        .collect()
}

/// `X'^E + w H_e + (1 - w) H_NN`.
pub fn transfer_high_frequency(
    y: &LumaImage,
    yp: &LumaImage,
    epitomic: &MatchResult,
    query: &[f64],
    nn: &MatchResult,
) -> Vec<f64> {
    let n = (query.len() as f64).sqrt() as usize;
    let he = high_frequency(y, yp, epitomic.origin, n);
    let hnn = high_frequency(y, yp, nn.origin, n);
    blend(query, epitomic.weight, &he, &hnn)
}

pub fn internal_noise(m: &MatchResult) -> f64 {
    m.error
}

#[derive(Clone, Debug, PartialEq)]
pub struct InternalConfig {
    pub epitome: EpitomeConfig,
    /// Radius of the local search window, in input pixels.
    pub nn_radius: usize,
}

impl Default for InternalConfig {
    fn default() -> Self {
        Self {
            epitome: EpitomeConfig::default(),
            nn_radius: 7,
        }
    }
}

/// Everything the internal branch knows about one input image on a given
/// output patch grid.
#[derive(Clone, Debug)]
pub struct InternalExamples {
    pub y: LumaImage,
    pub smoothed: LumaImage,
    pub interpolated: LumaImage,
    pub epitome: Epitome,
    pub report: EpitomeReport,
    pub queries: Vec<Vec<f64>>,
    pub epitomic: Vec<MatchResult>,
    pub nn: Vec<MatchResult>,
}

impl InternalExamples {
    pub fn build(y: &LumaImage, factor: usize, grid: &PatchGrid, config: &InternalConfig) -> Result<Self> {
        Self::build_with(y, factor, grid, config, None)
    }

    /// As [`InternalExamples::build`], reusing `epitome` when given instead
    /// of training one.
    pub fn build_with(
        y: &LumaImage,
        factor: usize,
        grid: &PatchGrid,
        config: &InternalConfig,
        epitome: Option<Epitome>,
    ) -> Result<Self> {
        let interpolated = upsample(y, factor)?;
        if grid.image_dims() != interpolated.dims() {
            return Err(Error::invalid(format!(
                "grid covers {:?} but the interpolated image is {:?}",
                grid.image_dims(),
                interpolated.dims()
            )));
        }
        let smoothed = smooth_input(y, factor)?;
        let n = grid.patch_size();
        let cfg = EpitomeConfig {
            patch_size: n,
            ..config.epitome.clone()
        };
        let (epitome, report) = match epitome {
            Some(e) => {
                if e.patch_size() != n || e.source_dims() != smoothed.dims() {
                    return Err(Error::invalid(format!(
                        "epitome is for {0}x{0} patches of a {1:?} image; need {n}x{n} patches of {2:?}",
                        e.patch_size(),
                        e.source_dims(),
                        smoothed.dims()
                    )));
                }
                (e, EpitomeReport::default())
            }
            None => train_epitome(&smoothed, &cfg)?,
        };
        let origins: Vec<_> = grid.origins().collect();
        let per_patch: Vec<Result<(Vec<f64>, MatchResult, MatchResult)>> = origins
            .par_iter()
            .map(|&(r, c)| {
                let q = extract_patch(&interpolated, r, c, n);
                let centre = ((r + factor / 2) / factor, (c + factor / 2) / factor);
                let epi = epitomic_match(&epitome, &smoothed, &q)?;
                let nn = nn_match(&smoothed, &q, centre, config.nn_radius)?;
                Ok((q, epi, nn))
            })
            .collect();
        let mut queries = Vec::with_capacity(origins.len());
        let mut epitomic = Vec::with_capacity(origins.len());
        let mut nn = Vec::with_capacity(origins.len());
        for item in per_patch {
            let (q, e, m) = item?;
            queries.push(q);
            epitomic.push(e);
            nn.push(m);
        }
        Ok(Self {
            y: y.clone(),
            smoothed,
            interpolated,
            epitome,
            report,
            queries,
            epitomic,
            nn,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    fn patch_size(&self) -> usize {
        self.epitome.patch_size()
    }

    /// Transferred HR patch when patch `idx` takes its epitomic high
    /// frequency from `candidate`.
    pub fn transfer_from(&self, idx: usize, candidate: &Candidate) -> Vec<f64> {
        let n = self.patch_size();
        let he = high_frequency(&self.y, &self.smoothed, candidate.origin, n);
        let hnn = high_frequency(&self.y, &self.smoothed, self.nn[idx].origin, n);
        blend(&self.queries[idx], self.epitomic[idx].weight, &he, &hnn)
    }

    /// Blended transfer at the epitomic match.
    pub fn epi_patch(&self, idx: usize) -> Vec<f64> {
        transfer_high_frequency(&self.y, &self.smoothed, &self.epitomic[idx], &self.queries[idx], &self.nn[idx])
    }

    /// Pure local-window transfer.
    pub fn nn_patch(&self, idx: usize) -> Vec<f64> {
        let n = self.patch_size();
        let hnn = high_frequency(&self.y, &self.smoothed, self.nn[idx].origin, n);
        self.queries[idx].iter().zip(hnn).map(|(q, h)| q + h).collect()
    }
}

fn internal_upscale(
    y: &LumaImage,
    factor: usize,
    overlap: usize,
    config: &InternalConfig,
    epitome: Option<Epitome>,
    patch: impl Fn(&InternalExamples, usize) -> Vec<f64>,
) -> Result<LumaImage> {
    validate_factor(factor)?;
    let n = config.epitome.patch_size;
    let grid = PatchGrid::new(y.height() * factor, y.width() * factor, n, overlap)?;
    let ex = InternalExamples::build_with(y, factor, &grid, config, epitome)?;
    let patches: Vec<Vec<f64>> = (0..ex.len()).map(|i| patch(&ex, i)).collect();
    Ok(assemble_patches(&patches, &grid)?.clamped())
}

/// Standalone internal SR with epitomic matching blended with local search.
pub fn epi_upscale(y: &LumaImage, factor: usize, overlap: usize, config: &InternalConfig) -> Result<LumaImage> {
    epi_upscale_with(y, factor, overlap, config, None)
}

/// As [`epi_upscale`] with an epitome already trained on the smoothed input.
pub fn epi_upscale_with(
    y: &LumaImage,
    factor: usize,
    overlap: usize,
    config: &InternalConfig,
    epitome: Option<Epitome>,
) -> Result<LumaImage> {
    internal_upscale(y, factor, overlap, config, epitome, InternalExamples::epi_patch)
}

/// Local-window high-frequency transfer only.
pub fn nn_upscale(y: &LumaImage, factor: usize, overlap: usize, config: &InternalConfig) -> Result<LumaImage> {
    // The window search needs no epitome, but building the shared patch
    // state trains one anyway; keep it cheap.
    let cheap = InternalConfig {
        epitome: EpitomeConfig {
            iterations: 1,
            max_patches: 1,
            candidates: 1,
            ..config.epitome.clone()
        },
        ..config.clone()
    };
    internal_upscale(y, factor, overlap, &cheap, None, InternalExamples::nn_patch)
}
