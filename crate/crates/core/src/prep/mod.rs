//! From discretely observed curves to functional objects: penalized B-spline
//! smoothing with a GCV-chosen roughness parameter, then rotation to a
//! functional principal component basis.

mod bspline;
mod fpca;
mod smoothing;

pub use bspline::{
    build_bspline_basis, effective_n_basis, gauss_legendre, KnotVector, SPARSE_GRID_THRESHOLD,
};
pub use fpca::{fpca, FpcaOutput, FpcaResult};
pub use smoothing::{smooth_curves, smooth_with, SmoothResult};

use crate::error::{Error, Result};

/// Default fraction of variance the FPC basis must explain.
pub const DEFAULT_TARGET_VARIANCE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig {
    pub n_basis: usize,
    pub spline_order: usize,
    pub penalty_order: usize,
    /// Candidate roughness parameters, strictly increasing and positive.
    pub gcv_grid: Vec<f64>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            n_basis: 100,
            spline_order: 4,
            penalty_order: 2,
            gcv_grid: geometric_grid(1e-8, 1e4, 50),
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spline_order == 0 || self.n_basis < self.spline_order {
            return Err(Error::InvalidInput(format!(
                "n_basis ({}) must be at least spline_order ({})",
                self.n_basis, self.spline_order
            )));
        }
        if self.gcv_grid.is_empty()
            || self.gcv_grid.iter().any(|m| !(*m > 0.0) || !m.is_finite())
            || self.gcv_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidInput(
                "gcv_grid must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// `n` log-evenly spaced values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
