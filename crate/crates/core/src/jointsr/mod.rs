//! Joint external/internal super-resolution by coordinate descent over the
//! sparse codes `a`, the internal estimates `X^E` and the HR patches `X`.
//!
//! Per patch the objective is
//!
//! ```text
//! lambda |a|_1 + |D_l a - y|^2 + |D_h a + mu - X|^2 + omega(a, X^E) |X - X^E|^2
//! omega = exp(p (N_g(a) - N_i(X^E)))
//! ```
//!
//! where `y` is the mean-removed interpolated observation and `mu` its mean.

mod weightmap;

pub use weightmap::{trace_csv, WeightMap};

use rayon::prelude::*;

use crate::epitome::{Candidate, Epitome, InternalConfig, InternalExamples};
use crate::error::{Error, Result};
use crate::imagecore::{assemble_patches, validate_factor, LumaImage, PatchGrid};
use crate::sparse::{csc_initialize, external_noise, DictionaryPair, SolverOptions, SparseCode, SparseConfig};

/// Bound on `|p (N_g - N_i)|` before exponentiating.
pub const EXPONENT_CLAMP: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weighting {
    Adaptive,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointConfig {
    /// Weight sharpness. The noises are squared errors of [0, 1] patches,
    /// so their difference is usually a few hundredths; p = 1 would leave
    /// every weight near 1.
    pub p: f64,
    pub lambda: f64,
    pub max_iterations: usize,
    pub patch_size: usize,
    pub overlap: usize,
    /// Stop once an outer iteration lowers the objective by less than this
    /// fraction.
    pub tolerance: f64,
    pub weighting: Weighting,
    pub internal: InternalConfig,
    pub solver: SolverOptions,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            p: 100.0,
            lambda: 0.1,
            max_iterations: 10,
            patch_size: 5,
            overlap: 1,
            tolerance: 1e-5,
            weighting: Weighting::Adaptive,
            internal: InternalConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl JointConfig {
    /// 25x25 patches overlapping by 5, at most 5 outer iterations.
    pub fn shd() -> Self {
        Self {
            patch_size: 25,
            overlap: 5,
            max_iterations: 5,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::invalid(format!("p must be positive, got {}", self.p)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("at least one outer iteration is required"));
        }
        if let Weighting::Fixed(w) = self.weighting {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("fixed weight must be positive, got {w}")));
            }
        }
        Ok(())
    }

    fn weight(&self, ng: f64, ni: f64) -> f64 {
        match self.weighting {
            Weighting::Adaptive => adaptive_weight(ng, ni, self.p),
            Weighting::Fixed(w) => w,
        }
    }
}

/// `exp(p (ng - ni))` with the exponent clamped to `+-EXPONENT_CLAMP`.
pub fn adaptive_weight(ng: f64, ni: f64, p: f64) -> f64 {
    (p * (ng - ni)).clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fixed data of one patch.
#[derive(Clone, Debug)]
pub struct PatchData {
    /// Mean-removed interpolated observation.
    pub y: Vec<f64>,
    pub mean: f64,
    /// Transferred HR patch and matching error for each internal candidate.
    pub candidates: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchState {
    pub code: SparseCode,
    /// Internal estimate `X^E`.
    pub internal: Vec<f64>,
    /// Index of `internal` among the patch's candidates.
    pub choice: usize,
    /// Current HR patch `X`.
    pub current: Vec<f64>,
    pub ng: f64,
    pub ni: f64,
}

/// `D_h a + mu`.
fn external_estimate(dict: &DictionaryPair, code: &SparseCode, mean: f64) -> Vec<f64> {
    code.reconstruct(dict.high()).into_iter().map(|v| v + mean).collect()
}

/// External loss `lambda |a|_1 + |D_l a - y|^2 + |D_h a + mu - X|^2`.
pub fn external_loss(dict: &DictionaryPair, lambda: f64, data: &PatchData, code: &SparseCode, x: &[f64]) -> f64 {
    lambda * code.l1_norm()
        + external_noise(code, dict.low(), &data.y)
        + sq_dist(&external_estimate(dict, code, data.mean), x)
}

/// Objective of one patch with weight `omega`.
pub fn patch_objective(dict: &DictionaryPair, lambda: f64, data: &PatchData, s: &PatchState, omega: f64) -> f64 {
    external_loss(dict, lambda, data, &s.code, &s.current) + omega * sq_dist(&s.current, &s.internal)
}

/// Sum of the per-patch objectives, with weights from the cached noises.
pub fn joint_objective(dict: &DictionaryPair, data: &[PatchData], states: &[PatchState], config: &JointConfig) -> f64 {
    data.iter()
        .zip(states)
        .map(|(d, s)| patch_objective(dict, config.lambda, d, s, config.weight(s.ng, s.ni)))
        .sum()
}

/// `C = p |X - X^E|^2 omega(a0, X^E)`; zero when the weight does not
/// depend on `a`.
pub fn linearization_coefficient(state: &PatchState, config: &JointConfig) -> f64 {
    match config.weighting {
        Weighting::Adaptive => {
            config.p * sq_dist(&state.current, &state.internal) * adaptive_weight(state.ng, state.ni, config.p)
        }
        Weighting::Fixed(_) => 0.0,
    }
}

/// Minimizer of the linearized code problem
/// `lambda |a|_1 + (1 + C)|D_l a - y|^2 + |D_h a - (X - mu)|^2`.
pub fn solve_linearized(dict: &DictionaryPair, data: &PatchData, state: &PatchState, c: f64, config: &JointConfig) -> Result<SparseCode> {
    let target: Vec<f64> = state.current.iter().map(|v| v - data.mean).collect();
    dict.coupled_problem(&data.y, 1.0 + c, Some((&target, 1.0)))
        .solve_from(Some(state.code.coefficients()), config.lambda, &config.solver)
}

/// Code update: solve the linearized problem, then move from the previous
/// code towards its solution only as far as the true objective keeps
/// decreasing. An unconverged solve still yields a usable direction, so its
/// best iterate is taken as the proposal.
pub fn solve_a_subproblem(dict: &DictionaryPair, data: &PatchData, state: &PatchState, config: &JointConfig) -> Result<SparseCode> {
    let c = linearization_coefficient(state, config);
    let proposal = match solve_linearized(dict, data, state, c, config) {
        Ok(code) => code,
        Err(Error::ConvergenceFailure { best, .. }) => *best,
        Err(e) => return Err(e),
    };
    let eval = |code: &SparseCode| {
        let ng = external_noise(code, dict.low(), &data.y);
        config.lambda * code.l1_norm()
            + ng
            + sq_dist(&external_estimate(dict, code, data.mean), &state.current)
            + config.weight(ng, state.ni) * sq_dist(&state.current, &state.internal)
    };
    let start = eval(&state.code);
    let old = state.code.coefficients();
    let dir: Vec<f64> = proposal.coefficients().iter().zip(old).map(|(n, o)| n - o).collect();
    let mut t = 1.0;
    for _ in 0..40 {
        let trial = if t == 1.0 {
            proposal.clone()
        } else {
            SparseCode::new(old.iter().zip(&dir).map(|(o, d)| o + t * d).collect())
        };
        if eval(&trial) <= start {
            return Ok(trial);
        }
        t *= 0.5;
    }
    Ok(state.code.clone())
}

/// Index of the candidate minimizing `omega(N_g, N_i) |X - X^E|^2`, which
/// under the adaptive weight orders candidates like
/// `exp(-p N_i) |X - X^E|^2`. Ties go to the lower index.
pub fn solve_xe_subproblem(x: &[f64], ng: f64, candidates: &[(Vec<f64>, f64)], config: &JointConfig) -> usize {
    let loss = |(patch, err): &(Vec<f64>, f64)| config.weight(ng, *err) * sq_dist(x, patch);
    let mut best = 0;
    let mut best_loss = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let l = loss(c);
        if l < best_loss {
            best = i;
            best_loss = l;
        }
    }
    best
}

/// `(D_h a + mu + omega X^E) / (1 + omega)`.
pub fn solve_x_subproblem(external: &[f64], internal: &[f64], omega: f64) -> Vec<f64> {
    external
        .iter()
        .zip(internal)
        .map(|(e, i)| (e + omega * i) / (1.0 + omega))
        .collect()
}

#[derive(Clone, Debug)]
pub struct JointResult {
    /// Overlap-averaged, clamped to [0, 1].
    pub image: LumaImage,
    pub weights: WeightMap,
    /// Objective before the first and after every outer iteration.
    pub trace: Vec<f64>,
    pub states: Vec<PatchState>,
}

/// Build the per-patch data and initial states: codes and `X` from coupled
/// sparse coding, `X^E` from the best epitomic candidate.
///
/// Starting `X` at the bicubic patch instead makes the first code update
/// fit the blur, and the iterations then stay close to the internal result.
pub fn initialize(
    lr: &LumaImage,
    dict: &DictionaryPair,
    grid: &PatchGrid,
    config: &JointConfig,
    epitome: Option<Epitome>,
) -> Result<(Vec<PatchData>, Vec<PatchState>, InternalExamples)> {
    let sparse = SparseConfig {
        lambda: config.lambda,
        solver: config.solver,
    };
    let csc = csc_initialize(lr, dict, grid, &sparse)?;
    let internal = InternalExamples::build_with(lr, dict.factor(), grid, &config.internal, epitome)?;
    let mut data = Vec::with_capacity(grid.len());
    let mut states = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let candidates: Vec<(Vec<f64>, f64)> = internal.epitomic[i]
            .candidates
            .iter()
            .map(|c: &Candidate| (internal.transfer_from(i, c), c.error))
            .collect();
        let code = csc.codes[i].clone();
        let ng = external_noise(&code, dict.low(), &csc.observations[i]);
        states.push(PatchState {
            code,
            internal: candidates[0].0.clone(),
            choice: 0,
            current: csc.patches[i].clone(),
            ng,
            ni: candidates[0].1,
        });
        data.push(PatchData {
            y: csc.observations[i].clone(),
            mean: csc.means[i],
            candidates,
        });
    }
    Ok((data, states, internal))
}

/// One outer iteration: codes, then internal estimates, then HR patches.
pub fn sweep(dict: &DictionaryPair, data: &[PatchData], states: &mut [PatchState], config: &JointConfig) -> Result<()> {
    states
        .par_iter_mut()
        .zip(data.par_iter())
        .try_for_each(|(s, d)| -> Result<()> {
            s.code = solve_a_subproblem(dict, d, s, config)?;
            s.ng = external_noise(&s.code, dict.low(), &d.y);

            s.choice = solve_xe_subproblem(&s.current, s.ng, &d.candidates, config);
            s.internal = d.candidates[s.choice].0.clone();
            s.ni = d.candidates[s.choice].1;

            let omega = config.weight(s.ng, s.ni);
            s.current = solve_x_subproblem(&external_estimate(dict, &s.code, d.mean), &s.internal, omega);
            Ok(())
        })
}

pub fn joint_upscale(lr: &LumaImage, dict: &DictionaryPair, config: &JointConfig) -> Result<JointResult> {
    joint_upscale_with(lr, dict, config, None)
}

/// As [`joint_upscale`], optionally reusing an epitome trained on the
/// smoothed input.
pub fn joint_upscale_with(
    lr: &LumaImage,
    dict: &DictionaryPair,
    config: &JointConfig,
    epitome: Option<Epitome>,
) -> Result<JointResult> {
    config.validate()?;
    let factor = dict.factor();
    validate_factor(factor)?;
    if dict.patch_size() != config.patch_size {
        return Err(Error::invalid(format!(
            "dictionary is for {0}x{0} patches, configuration asks for {1}x{1}",
            dict.patch_size(),
            config.patch_size
        )));
    }
    let grid = PatchGrid::new(lr.height() * factor, lr.width() * factor, config.patch_size, config.overlap)?;
    let (data, mut states, _) = initialize(lr, dict, &grid, config, epitome)?;

    let mut trace = vec![joint_objective(dict, &data, &states, config)];
    for _ in 0..config.max_iterations {
        sweep(dict, &data, &mut states, config)?;
        let obj = joint_objective(dict, &data, &states, config);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(obj);
        if prev - obj < config.tolerance * prev.abs() {
            break;
        }
    }

    let patches: Vec<&[f64]> = states.iter().map(|s| s.current.as_slice()).collect();
    let image = assemble_patches(&patches, &grid)?.clamped();
    let omega = states.iter().map(|s| config.weight(s.ng, s.ni)).collect();
    Ok(JointResult {
        image,
        weights: WeightMap::new(&grid, omega)?,
        trace,
        states,
    })
}

/// Same pipeline with every patch weight frozen at `omega`.
pub fn fixed_weight_upscale(lr: &LumaImage, dict: &DictionaryPair, omega: f64, config: &JointConfig) -> Result<JointResult> {
    let config = JointConfig {
        weighting: Weighting::Fixed(omega),
        ..config.clone()
    };
    joint_upscale(lr, dict, &config)
}

#[cfg(test)]
mod tests;
