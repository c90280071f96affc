//! Internal-example branch: a Gaussian epitome of the smoothed input learned
//! by EM, epitomic and local nearest-neighbour matching, and high-frequency
//! transfer.

mod matching;

pub use matching::{
    epi_upscale, epi_upscale_with, epitomic_match, internal_noise, nn_match, nn_upscale, transfer_high_frequency,
    Candidate, InternalConfig, InternalExamples, MatchResult,
};

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{extract_patch, LumaImage};

const MAGIC: &[u8; 8] = b"JSREPIT\0";
const VERSION: u32 = 1;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct EpitomeConfig {
    /// `(rows, cols)`; `None` picks half of each source dimension so the
    /// epitome holds about a quarter of the source pixels.
    pub size: Option<(usize, usize)>,
    pub patch_size: usize,
    pub iterations: usize,
    pub variance_floor: f64,
    pub initial_variance: f64,
    /// Training patches are subsampled to at most this many.
    pub max_patches: usize,
    /// Source candidates stored per hidden mapping.
    pub candidates: usize,
    /// Let hidden mappings wrap around the epitome borders.
    pub wrap: bool,
    pub seed: u64,
}

impl Default for EpitomeConfig {
    fn default() -> Self {
        Self {
            size: None,
            patch_size: 5,
            iterations: 10,
            variance_floor: 1e-4,
            initial_variance: 0.1,
            max_patches: 40_000,
            candidates: 5,
            wrap: true,
            seed: 0,
        }
    }
}

/// Top-left corner of a patch-sized window in the epitome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HiddenMapping {
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Epitome {
    height: usize,
    width: usize,
    patch_size: usize,
    wrap: bool,
    mu: Vec<f64>,
    var: Vec<f64>,
    prior: Vec<f64>,
    /// Source-image dimensions the candidate origins refer to.
    source_dims: (usize, usize),
    /// Per mapping, the best source patch origins, most likely first.
    candidates: Vec<Vec<(usize, usize)>>,
    ln_var: Vec<f64>,
    inv_var: Vec<f64>,
    /// `patch_size^2` epitome cell indices per mapping.
    cell_table: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpitomeReport {
    /// Log-likelihood of the training patches before every M-step and
    /// after the last one.
    pub log_likelihood: Vec<f64>,
    pub training_patches: usize,
}

/// Turn log weights into probabilities in place; returns `log sum exp(v)`.
fn normalize_log(v: &mut [f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    v.iter_mut().for_each(|x| *x /= total);
    m + total.ln()
}

impl Epitome {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        (height, width): (usize, usize),
        patch_size: usize,
        wrap: bool,
        mu: Vec<f64>,
        var: Vec<f64>,
        prior: Vec<f64>,
        source_dims: (usize, usize),
        candidates: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if patch_size == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("epitome and patch sizes must be positive"));
        }
        if !wrap && (patch_size > height || patch_size > width) {
            return Err(Error::invalid(format!(
                "{patch_size}x{patch_size} patches do not fit a non-wrapping {height}x{width} epitome"
            )));
        }
        let cells = height * width;
        let maps = mapping_shape((height, width), patch_size, wrap);
        let maps = maps.0 * maps.1;
        if mu.len() != cells || var.len() != cells {
            return Err(Error::invalid("mean/variance maps do not match the epitome size"));
        }
        if prior.len() != maps || candidates.len() != maps {
            return Err(Error::invalid(format!(
                "expected prior and candidate lists for {maps} hidden mappings"
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) || var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("epitome means must be finite and variances positive"));
        }
        let total: f64 = prior.iter().sum();
        if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("epitome prior must be a probability vector"));
        }
        let (sh, sw) = source_dims;
        for list in &candidates {
            for &(r, c) in list {
                if r + patch_size > sh || c + patch_size > sw {
                    return Err(Error::invalid(format!(
                        "candidate origin ({r}, {c}) is not a patch origin in a {sh}x{sw} image"
                    )));
                }
            }
        }
        let ln_var = var.iter().map(|v| v.ln()).collect();
        let inv_var = var.iter().map(|v| 1.0 / v).collect();
        let map_cols = mapping_shape((height, width), patch_size, wrap).1;
        let mut cell_table = Vec::with_capacity(maps * patch_size * patch_size);
        for t in 0..maps {
            let (row, col) = (t / map_cols, t % map_cols);
            for u in 0..patch_size {
                let r = (row + u) % height;
                for v in 0..patch_size {
                    cell_table.push((r * width + (col + v) % width) as u32);
                }
            }
        }
        Ok(Self {
            height,
            width,
            patch_size,
            wrap,
            mu,
            var,
            prior,
            source_dims,
            candidates,
            ln_var,
            inv_var,
            cell_table,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn wraps(&self) -> bool {
        self.wrap
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn mapping_count(&self) -> usize {
        self.prior.len()
    }

    pub fn mapping(&self, index: usize) -> HiddenMapping {
        let cols = mapping_shape(self.dims(), self.patch_size, self.wrap).1;
        HiddenMapping {
            row: index / cols,
            col: index % cols,
        }
    }

    /// Stored source candidates of one mapping.
    pub fn candidates(&self, mapping: usize) -> &[(usize, usize)] {
        &self.candidates[mapping]
    }

    /// Epitome cell indices covered by mapping `t`, row-major over the patch.
    fn cells(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        let nn = self.patch_size * self.patch_size;
        self.cell_table[t * nn..(t + 1) * nn].iter().map(|&c| c as usize)
    }

    /// `log p(z | T)` for every mapping.
    fn log_likelihoods(&self, z: &[f64], out: &mut [f64]) {
        for (t, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (cell, &x) in self.cells(t).zip(z) {
                let d = x - self.mu[cell];
                acc += self.ln_var[cell] + d * d * self.inv_var[cell];
            }
            *o = -0.5 * (acc + z.len() as f64 * LN_2PI);
        }
    }

    /// Posterior over mappings into `out`; returns the log evidence
    /// `log p(z)`.
    fn posterior_into(&self, z: &[f64], out: &mut [f64]) -> f64 {
        self.log_likelihoods(z, out);
        for (o, &p) in out.iter_mut().zip(&self.prior) {
            *o += if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        }
        normalize_log(out)
    }

    fn check_patch(&self, patch: &[f64]) -> Result<()> {
        let n = self.patch_size;
        if patch.len() != n * n {
            return Err(Error::invalid(format!(
                "patch has {} pixels, epitome expects {n}x{n}",
                patch.len()
            )));
        }
        if patch.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("patch has non-finite pixels"));
        }
        Ok(())
    }

    /// `p(T | patch)` over all hidden mappings, normalized in log space.
    pub fn posterior(&self, patch: &[f64]) -> Result<Vec<f64>> {
        self.check_patch(patch)?;
        let mut post = vec![0.0; self.mapping_count()];
        self.posterior_into(patch, &mut post);
        Ok(post)
    }

    /// Most probable mapping (smallest index on ties) and its posterior.
    pub fn most_probable(&self, patch: &[f64]) -> Result<(usize, f64)> {
        let post = self.posterior(patch)?;
        let mut best = 0;
        for (t, &p) in post.iter().enumerate() {
            if p > post[best] {
                best = t;
            }
        }
        Ok((best, post[best]))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let k = self.candidates.first().map_or(0, Vec::len);
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.height as u32,
            self.width as u32,
            self.patch_size as u32,
            k as u32,
            self.wrap as u32,
            self.source_dims.0 as u32,
            self.source_dims.1 as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.mu.iter().chain(&self.var).chain(&self.prior) {
            w.write_all(&v.to_le_bytes())?;
        }
        for list in &self.candidates {
            for &(r, c) in list {
                w.write_all(&(r as u32).to_le_bytes())?;
                w.write_all(&(c as u32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "epitome",
            reason,
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| bad(format!("header: {e}")))?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let mut u32s = [0u32; 8];
        for v in u32s.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| bad(format!("header: {e}")))?;
            *v = u32::from_le_bytes(b);
        }
        let [version, h, w, n, k, wrap, sh, sw] = u32s.map(|v| v as usize);
        if version != VERSION as usize {
            return Err(bad(format!("unsupported version {version}")));
        }
        if wrap > 1 || h == 0 || w == 0 || n == 0 || h * w > 1 << 28 || n > 1 << 10 {
            return Err(bad(format!("implausible header {h}x{w}, patch {n}")));
        }
        let (mr, mc) = mapping_shape((h, w), n, wrap == 1);
        let maps = mr * mc;
        let read_f64s = |r: &mut dyn Read, count: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf).map_err(|e| bad(format!("truncated data: {e}")))?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let mu = read_f64s(&mut r, h * w)?;
        let var = read_f64s(&mut r, h * w)?;
        let prior = read_f64s(&mut r, maps)?;
        let mut buf = vec![0u8; maps * k * 8];
        r.read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated candidate index: {e}")))?;
        let words: Vec<usize> = buf
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
            .collect();
        let candidates = words
            .chunks_exact(2 * k.max(1))
            .take(maps)
            .map(|c| c.chunks_exact(2).map(|p| (p[0], p[1])).collect())
            .collect::<Vec<_>>();
        let candidates = if k == 0 { vec![Vec::new(); maps] } else { candidates };
        if r.read(&mut [0u8; 1]).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        Self::new((h, w), n, wrap == 1, mu, var, prior, (sh, sw), candidates)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn mapping_shape((h, w): (usize, usize), n: usize, wrap: bool) -> (usize, usize) {
    if wrap {
        (h, w)
    } else {
        (h + 1 - n.min(h), w + 1 - n.min(w))
    }
}

/// Sufficient statistics of one chunk of E-step work.
struct Stats {
    weight: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    prior: Vec<f64>,
    log_likelihood: f64,
}

impl Stats {
    fn zeros(cells: usize, maps: usize) -> Self {
        Self {
            weight: vec![0.0; cells],
            sum: vec![0.0; cells],
            sum_sq: vec![0.0; cells],
            prior: vec![0.0; maps],
            log_likelihood: 0.0,
        }
    }

    fn add(&mut self, other: &Stats) {
        let pairs = [
            (&mut self.weight, &other.weight),
            (&mut self.sum, &other.sum),
            (&mut self.sum_sq, &other.sum_sq),
            (&mut self.prior, &other.prior),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.log_likelihood += other.log_likelihood;
    }
}

fn e_step(e: &Epitome, patches: &[Vec<f64>]) -> Stats {
    let cells = e.height * e.width;
    let maps = e.mapping_count();
    let chunk = 256.max(patches.len().div_ceil(32));
    let parts: Vec<Stats> = patches
        .par_chunks(chunk)
        .map(|batch| {
            let mut s = Stats::zeros(cells, maps);
            let mut lp = vec![0.0; maps];
            for z in batch {
                s.log_likelihood += e.posterior_into(z, &mut lp);
                for t in 0..maps {
                    let q = lp[t];
                    if q == 0.0 {
                        continue;
                    }
                    s.prior[t] += q;
                    for (cell, &x) in e.cells(t).zip(z) {
                        s.weight[cell] += q;
                        s.sum[cell] += q * x;
                        s.sum_sq[cell] += q * x * x;
                    }
                }
            }
            s
        })
        .collect();
    let mut total = Stats::zeros(cells, maps);
    for p in &parts {
        total.add(p);
    }
    total
}

fn m_step(e: &mut Epitome, s: &Stats, floor: f64) {
    for cell in 0..e.mu.len() {
        let w = s.weight[cell];
        if w <= 0.0 {
            continue;
        }
        let m = s.sum[cell] / w;
        let v = (s.sum_sq[cell] / w - m * m).max(floor);
        e.mu[cell] = m;
        e.var[cell] = v;
        e.ln_var[cell] = v.ln();
        e.inv_var[cell] = 1.0 / v;
    }
    let total: f64 = s.prior.iter().sum();
    for (p, &a) in e.prior.iter_mut().zip(&s.prior) {
        *p = a / total;
    }
}

/// Most likely `k` training patches for every mapping, by `log p(z | T)`.
fn candidate_index(e: &Epitome, patches: &[Vec<f64>], origins: &[(usize, usize)], k: usize) -> Vec<Vec<(usize, usize)>> {
    let k = k.min(patches.len());
    (0..e.mapping_count())
        .into_par_iter()
        .map(|t| {
            let cells: Vec<usize> = e.cells(t).collect();
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for (i, z) in patches.iter().enumerate() {
                let mut acc = 0.0;
                for (&cell, &x) in cells.iter().zip(z) {
                    let d = x - e.mu[cell];
                    acc += e.ln_var[cell] + d * d * e.inv_var[cell];
                }
                let ll = -acc;
                // Strictly better only, so earlier (row-major) patches win ties.
                if best.len() == k && best.last().is_some_and(|&(b, _)| ll <= b) {
                    continue;
                }
                let pos = best.iter().position(|&(b, _)| ll > b).unwrap_or(best.len());
                best.insert(pos, (ll, i));
                best.truncate(k);
            }
            best.into_iter().map(|(_, i)| origins[i]).collect()
        })
        .collect()
}

/// Learn an epitome of `source` by EM over densely sampled patches.
pub fn train_epitome(source: &LumaImage, config: &EpitomeConfig) -> Result<(Epitome, EpitomeReport)> {
    let n = config.patch_size;
    let (h, w) = source.dims();
    if n == 0 || n > h || n > w {
        return Err(Error::invalid(format!(
            "{n}x{n} patches do not fit a {h}x{w} image"
        )));
    }
    if config.iterations == 0 {
        return Err(Error::invalid("at least one EM iteration is required"));
    }
    if !(config.variance_floor > 0.0 && config.initial_variance >= config.variance_floor) {
        return Err(Error::invalid("variance floor must be positive and below the initial variance"));
    }
    if config.candidates == 0 || config.max_patches == 0 {
        return Err(Error::invalid("candidate count and patch budget must be positive"));
    }
    let (eh, ew) = config
        .size
        .unwrap_or((h.div_ceil(2), w.div_ceil(2)));
    let (eh, ew) = if config.size.is_none() {
        (eh.max(n).min(h), ew.max(n).min(w))
    } else {
        (eh, ew)
    };
    if eh == 0 || ew == 0 || eh > h || ew > w || eh * ew >= h * w {
        return Err(Error::invalid(format!(
            "a {eh}x{ew} epitome must be smaller than the {h}x{w} source"
        )));
    }
    if !config.wrap && (n > eh || n > ew) {
        return Err(Error::invalid(format!(
            "{n}x{n} patches do not fit a non-wrapping {eh}x{ew} epitome"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let all: Vec<(usize, usize)> = (0..=h - n)
        .flat_map(|r| (0..=w - n).map(move |c| (r, c)))
        .collect();
    let origins: Vec<(usize, usize)> = if all.len() > config.max_patches {
        let mut pick = sample(&mut rng, all.len(), config.max_patches).into_vec();
        pick.sort_unstable();
        pick.into_iter().map(|i| all[i]).collect()
    } else {
        all
    };
    let patches: Vec<Vec<f64>> = origins
        .iter()
        .map(|&(r, c)| extract_patch(source, r, c, n))
        .collect();

    // Mosaic of random source crops.
    let mut mu = vec![0.0; eh * ew];
    for br in (0..eh).step_by(n) {
        for bc in (0..ew).step_by(n) {
            let (sr, sc) = (rng.gen_range(0..=h - n), rng.gen_range(0..=w - n));
            for u in 0..n.min(eh - br) {
                for v in 0..n.min(ew - bc) {
                    mu[(br + u) * ew + bc + v] = source.get(sr + u, sc + v);
                }
            }
        }
    }
    let (mr, mc) = mapping_shape((eh, ew), n, config.wrap);
    let maps = mr * mc;
    let mut epitome = Epitome::new(
        (eh, ew),
        n,
        config.wrap,
        mu,
        vec![config.initial_variance; eh * ew],
        vec![1.0 / maps as f64; maps],
        (h, w),
        vec![Vec::new(); maps],
    )?;

    let mut report = EpitomeReport {
        log_likelihood: Vec::with_capacity(config.iterations + 1),
        training_patches: patches.len(),
    };
    for _ in 0..config.iterations {
        let stats = e_step(&epitome, &patches);
        report.log_likelihood.push(stats.log_likelihood);
        m_step(&mut epitome, &stats, config.variance_floor);
    }
    report.log_likelihood.push(e_step_log_likelihood(&epitome, &patches));
    epitome.candidates = candidate_index(&epitome, &patches, &origins, config.candidates);
    Ok((epitome, report))
}

fn e_step_log_likelihood(e: &Epitome, patches: &[Vec<f64>]) -> f64 {
    let chunk = 256.max(patches.len().div_ceil(32));
    let parts: Vec<f64> = patches
        .par_chunks(chunk)
        .map(|batch| {
            let mut lp = vec![0.0; e.mapping_count()];
            batch.iter().map(|z| e.posterior_into(z, &mut lp)).sum()
        })
        .collect();
    parts.iter().sum()
}
