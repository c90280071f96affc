//! External-example branch: exact L1 sparse coding, coupled dictionaries and
//! the coupled-sparse-coding (CSC) upscaler.

mod csc;
mod dictionary;
mod feature_sign;

pub use csc::{csc_initialize, csc_upscale, patch_mean, training_pairs, CscResult};
pub use dictionary::{train_coupled_dictionary, DictionaryPair, TrainingOptions, TrainingReport};
pub use feature_sign::{L1Problem, SolverOptions};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sparse coefficient vector. Exact zeros are off-support.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    coefficients: Vec<f64>,
}

impl SparseCode {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(vec![0.0; k])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.coefficients[i] != 0.0)
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v.abs()).sum()
    }

    /// `D a` for a dictionary with one atom per column.
    pub fn reconstruct(&self, dict: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![0.0; dict.nrows()];
        for (j, &a) in self.coefficients.iter().enumerate() {
            if a != 0.0 {
                for (o, d) in out.iter_mut().zip(dict.column(j).iter()) {
                    *o += a * d;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseConfig {
    pub lambda: f64,
    pub solver: SolverOptions,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            solver: SolverOptions::default(),
        }
    }
}

/// One weighted fidelity term `weight * |matrix a - target|^2`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub target: &'a [f64],
    pub weight: f64,
}

impl L1Problem<'static> {
    /// Collapse a sum of weighted least-squares terms into normal-equation
    /// form.
    pub fn from_quadratics(terms: &[Quadratic<'_>]) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::invalid("at least one quadratic term is required"));
        };
        let k = first.matrix.ncols();
        let mut gram = DMatrix::zeros(k, k);
        let mut linear = DVector::zeros(k);
        let mut constant = 0.0;
        for t in terms {
            if t.matrix.ncols() != k {
                return Err(Error::invalid(format!(
                    "dictionary has {} atoms, expected {k}",
                    t.matrix.ncols()
                )));
            }
            if t.matrix.nrows() != t.target.len() {
                return Err(Error::invalid(format!(
                    "target has {} entries but dictionary has {} rows",
                    t.target.len(),
                    t.matrix.nrows()
                )));
            }
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(Error::invalid(format!(
                    "quadratic weight must be finite and >= 0, got {}",
                    t.weight
                )));
            }
            if t.matrix.iter().chain(t.target).any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite dictionary or target entries"));
            }
            let target = DVector::from_column_slice(t.target);
            gram += t.weight * t.matrix.tr_mul(t.matrix);
            linear += t.weight * t.matrix.tr_mul(&target);
            constant += t.weight * target.norm_squared();
        }
        Ok(Self {
            gram: std::borrow::Cow::Owned(gram),
            linear,
            constant,
        })
    }
}

/// Minimize `lambda |a|_1 + |D a - y|^2 + sum_i w_i |B_i a - z_i|^2`.
pub fn l1_solve(
    dict: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    extra: &[Quadratic<'_>],
    config: &SolverOptions,
) -> Result<SparseCode> {
    let mut terms = Vec::with_capacity(extra.len() + 1);
    terms.push(Quadratic {
        matrix: dict,
        target: y,
        weight: 1.0,
    });
    terms.extend_from_slice(extra);
    L1Problem::from_quadratics(&terms)?.solve(lambda, config)
}

/// Sparse-coding residual `|D_l a - y|^2`.
pub fn external_noise(code: &SparseCode, dict_low: &DMatrix<f64>, y: &[f64]) -> f64 {
    code.reconstruct(dict_low)
        .iter()
        .zip(y)
        .map(|(r, t)| (r - t) * (r - t))
        .sum()
}
