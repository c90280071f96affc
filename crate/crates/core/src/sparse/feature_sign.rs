//! Feature-sign search for
//!
//! ```text
//! min_a  a'Ga - 2b'a + c + lambda * |a|_1
//! ```
//!
//! with `G` symmetric positive semidefinite. The active-set iteration guesses
//! the sign of every nonzero coefficient, solves the resulting unconstrained
//! quadratic on the active set and line-searches over the sign changes on the
//! way there. Each step strictly lowers the objective, so the search
//! terminates with an exact minimizer; if numerical trouble stalls it, exact
//! coordinate descent finishes the job.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::SparseCode;
use crate::error::{Error, Result};

/// Quadratic part of an L1-regularized least-squares problem.
#[derive(Clone, Debug)]
pub struct L1Problem<'g> {
    pub gram: Cow<'g, DMatrix<f64>>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Bound on the KKT residual, relative to the problem scale.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-8,
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl L1Problem<'_> {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// `a'Ga - 2b'a + c + lambda |a|_1`.
    pub fn objective(&self, a: &[f64], lambda: f64) -> f64 {
        let nz: Vec<usize> = (0..a.len()).filter(|&j| a[j] != 0.0).collect();
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut l1 = 0.0;
        for &j in &nz {
            let row: f64 = nz.iter().map(|&i| self.gram[(j, i)] * a[i]).sum();
            quad += a[j] * row;
            lin += self.linear[j] * a[j];
            l1 += a[j].abs();
        }
        quad - 2.0 * lin + self.constant + lambda * l1
    }

    /// Gradient of the smooth part, `2(Ga - b)`.
    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let k = self.dim();
        let mut g: Vec<f64> = (0..k).map(|j| -2.0 * self.linear[j]).collect();
        for (i, &ai) in a.iter().enumerate() {
            if ai != 0.0 {
                let col = self.gram.column(i);
                for j in 0..k {
                    g[j] += 2.0 * col[j] * ai;
                }
            }
        }
        g
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_residual(&self, a: &[f64], lambda: f64) -> f64 {
        self.gradient(a)
            .iter()
            .zip(a)
            .map(|(&g, &aj)| {
                if aj != 0.0 {
                    (g + lambda * sign(aj)).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    fn scale(&self, lambda: f64) -> f64 {
        let b = self.linear.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        1.0f64.max(2.0 * b).max(lambda)
    }

    pub fn solve(&self, lambda: f64, opts: &SolverOptions) -> Result<SparseCode> {
        self.solve_from(None, lambda, opts)
    }

    /// Solve, optionally warm-started from `init`.
    pub fn solve_from(
        &self,
        init: Option<&[f64]>,
        lambda: f64,
        opts: &SolverOptions,
    ) -> Result<SparseCode> {
        let k = self.dim();
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if self.gram.iter().chain(self.linear.iter()).any(|v| !v.is_finite())
            || !self.constant.is_finite()
        {
            return Err(Error::invalid("L1 problem has non-finite entries"));
        }
        let mut x = match init {
            Some(a) if a.len() == k && a.iter().all(|v| v.is_finite()) => a.to_vec(),
            Some(a) if a.len() != k => {
                return Err(Error::invalid(format!(
                    "warm start has {} coefficients, expected {k}",
                    a.len()
                )))
            }
            _ => vec![0.0; k],
        };
        let tol = opts.tolerance * self.scale(lambda);
        let mut iterations = 0;

        match self.feature_sign(&mut x, lambda, tol, opts.max_iterations, &mut iterations) {
            Outcome::Converged => return Ok(SparseCode::new(x)),
            Outcome::Stalled | Outcome::Exhausted => {}
        }

        // Sign cycling or a singular active set; polish with coordinate
        // descent from the best feature-sign iterate.
        let budget = opts.max_iterations.max(1);
        if self.coordinate_descent(&mut x, lambda, tol, budget, &mut iterations) {
            return Ok(SparseCode::new(x));
        }
        let residual = self.kkt_residual(&x, lambda);
        Err(Error::ConvergenceFailure {
            best: Box::new(SparseCode::new(x)),
            residual,
            iterations,
        })
    }

    fn feature_sign(
        &self,
        x: &mut [f64],
        lambda: f64,
        tol: f64,
        max_iter: usize,
        iterations: &mut usize,
    ) -> Outcome {
        let k = self.dim();
        let mut grad = self.gradient(x);
        let mut obj = self.objective(x, lambda);
        let mut active: Vec<usize> = (0..k).filter(|&j| x[j] != 0.0).collect();
        let mut theta: Vec<f64> = x.iter().map(|&v| sign(v)).collect();

        loop {
            // Step 2: activate the most violating zero coefficient.
            let mut best: Option<(usize, f64)> = None;
            for j in 0..k {
                if x[j] == 0.0 && grad[j].abs() > lambda + tol {
                    match best {
                        Some((_, g)) if grad[j].abs() <= g => {}
                        _ => best = Some((j, grad[j].abs())),
                    }
                }
            }
            let optimal_active = active
                .iter()
                .all(|&j| (grad[j] + lambda * theta[j]).abs() <= tol);
            match best {
                None if optimal_active => return Outcome::Converged,
                None => {}
                Some((j, _)) => {
                    theta[j] = -sign(grad[j]);
                    active.push(j);
                    active.sort_unstable();
                }
            }

            // Step 3: feature-sign steps until the active set is optimal.
            loop {
                *iterations += 1;
                if *iterations > max_iter {
                    return Outcome::Exhausted;
                }
                if active.is_empty() {
                    break;
                }
                let Some(target) = self.active_solution(&active, &theta, lambda) else {
                    return Outcome::Stalled;
                };
                let current: Vec<f64> = active.iter().map(|&j| x[j]).collect();
                let (next, next_obj) = self.line_search(&active, &current, &target, lambda, x);
                if !(next_obj < obj) {
                    return Outcome::Stalled;
                }
                obj = next_obj;
                for (&j, &v) in active.iter().zip(&next) {
                    x[j] = v;
                }
                active.retain(|&j| x[j] != 0.0);
                for j in 0..k {
                    theta[j] = sign(x[j]);
                }
                grad = self.gradient(x);
                if active
                    .iter()
                    .all(|&j| (grad[j] + lambda * theta[j]).abs() <= tol)
                {
                    break;
                }
            }
        }
    }

    /// Minimizer of the sign-linearized objective on the active set.
    fn active_solution(&self, active: &[usize], theta: &[f64], lambda: f64) -> Option<Vec<f64>> {
        let m = active.len();
        let sub = DMatrix::from_fn(m, m, |r, c| self.gram[(active[r], active[c])]);
        let rhs = DVector::from_iterator(
            m,
            active
                .iter()
                .map(|&j| self.linear[j] - 0.5 * lambda * theta[j]),
        );
        let sol = match sub.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => sub.svd(true, true).solve(&rhs, 1e-12).ok()?,
        };
        sol.iter().all(|v| v.is_finite()).then(|| sol.as_slice().to_vec())
    }

    /// Discrete line search from `current` towards `target` over the
    /// endpoint and every zero crossing. Returns the best point and its
    /// objective.
    fn line_search(
        &self,
        active: &[usize],
        current: &[f64],
        target: &[f64],
        lambda: f64,
        x: &[f64],
    ) -> (Vec<f64>, f64) {
        // Step at which each coefficient reaches zero, if it does.
        let crossing: Vec<Option<f64>> = current
            .iter()
            .zip(target)
            .map(|(&c, &t)| (c != 0.0 && sign(c) != sign(t)).then(|| c / (c - t)))
            .collect();
        let mut steps = vec![1.0];
        steps.extend(crossing.iter().flatten().copied());
        let mut trial = x.to_vec();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in steps {
            let point: Vec<f64> = current
                .iter()
                .zip(target)
                .zip(&crossing)
                .map(|((&c, &t), &cross)| {
                    if cross == Some(s) {
                        0.0
                    } else {
                        c + s * (t - c)
                    }
                })
                .collect();
            for (&j, &v) in active.iter().zip(&point) {
                trial[j] = v;
            }
            let o = self.objective(&trial, lambda);
            if best.as_ref().is_none_or(|(_, b)| o < *b) {
                best = Some((point, o));
            }
        }
        best.expect("at least the full step is tried")
    }

    fn coordinate_descent(
        &self,
        x: &mut [f64],
        lambda: f64,
        tol: f64,
        max_sweeps: usize,
        iterations: &mut usize,
    ) -> bool {
        let k = self.dim();
        // gx = G x
        let mut gx: Vec<f64> = self.gradient(x)
            .iter()
            .enumerate()
            .map(|(j, g)| 0.5 * g + self.linear[j])
            .collect();
        for _ in 0..max_sweeps {
            *iterations += 1;
            for j in 0..k {
                let gjj = self.gram[(j, j)];
                let old = x[j];
                let new = if gjj > 0.0 {
                    let r = self.linear[j] - (gx[j] - gjj * old);
                    let mag = (r.abs() - 0.5 * lambda).max(0.0);
                    sign(r) * mag / gjj
                } else {
                    0.0
                };
                if new != old {
                    let d = new - old;
                    let col = self.gram.column(j);
                    for i in 0..k {
                        gx[i] += col[i] * d;
                    }
                    x[j] = new;
                }
            }
            if self.kkt_residual(x, lambda) <= tol {
                return true;
            }
        }
        false
    }
}

enum Outcome {
    Converged,
    Stalled,
    Exhausted,
}
