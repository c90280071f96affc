use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imagecore::{LumaImage, PatchGrid};

/// Per-patch weights `omega` on the patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    grid: PatchGrid,
    omega: Vec<f64>,
}

impl WeightMap {
    pub fn new(grid: &PatchGrid, omega: Vec<f64>) -> Result<Self> {
        if omega.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} weights for a grid of {} patches",
                omega.len(),
                grid.len()
            )));
        }
        if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights must be finite and positive"));
        }
        Ok(Self {
            grid: grid.clone(),
            omega,
        })
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// `s = 1 / (1 + omega)`: near 0 where internal examples dominate,
    /// near 1 where external ones do.
    pub fn sigmoid(&self) -> Vec<f64> {
        self.omega.iter().map(|w| 1.0 / (1.0 + w)).collect()
    }

    /// `s` at image resolution; each pixel takes the patch whose centre is
    /// nearest.
    pub fn heat_map(&self) -> LumaImage {
        let s = self.sigmoid();
        let n = self.grid.patch_size() as f64;
        let nearest = |origins: &[usize], x: usize| {
            let mut best = 0;
            for (i, &o) in origins.iter().enumerate() {
                let d = (o as f64 + (n - 1.0) / 2.0 - x as f64).abs();
                let bd = (origins[best] as f64 + (n - 1.0) / 2.0 - x as f64).abs();
                if d < bd {
                    best = i;
                }
            }
            best
        };
        let (h, w) = self.grid.image_dims();
        let rows: Vec<usize> = (0..h).map(|r| nearest(self.grid.row_origins(), r)).collect();
        let cols: Vec<usize> = (0..w).map(|c| nearest(self.grid.col_origins(), c)).collect();
        let gw = self.grid.shape().1;
        LumaImage::from_fn(h, w, |r, c| s[rows[r] * gw + cols[c]])
    }

    /// `row,col,omega,s` per patch origin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,omega,s\n");
        for (i, (r, c)) in self.grid.origins().enumerate() {
            let w = self.omega[i];
            let _ = writeln!(out, "{r},{c},{w:.10e},{:.10}", 1.0 / (1.0 + w));
        }
        out
    }
}

/// `iteration,objective` rows.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:.12e}");
    }
    out
}
