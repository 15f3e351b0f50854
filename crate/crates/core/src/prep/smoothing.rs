use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::funspace::Basis;

use super::SmoothingConfig;

#[derive(Debug, Clone)]
pub struct SmoothResult {
    /// One row of basis coefficients per curve.
    pub coeffs: DMatrix<f64>,
    /// Roughness parameter shared by all curves.
    pub mu: f64,
    /// `(mu, gcv)` for every candidate that could be solved.
    pub gcv: Vec<(f64, f64)>,
    /// `tr(H_mu)` at the chosen parameter.
    pub effective_df: f64,
}

/// One candidate of the ridge smoother: coefficients, pooled RSS and trace of
/// the hat matrix.
pub(crate) fn ridge_fit(
    ptp: &DMatrix<f64>,
    pty: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    mu: f64,
) -> Option<(DMatrix<f64>, f64)> {
    let a = ptp + penalty * mu;
    let ch = a.cholesky()?;
    let coeffs_t = ch.solve(pty);
    let trace = ch.solve(ptp).trace();
    if !coeffs_t.iter().all(|v| v.is_finite()) || !trace.is_finite() {
        return None;
    }
    Some((coeffs_t, trace))
}

/// Penalized least squares smoothing of every curve in `raw` (one row per
/// subject, sampled on `basis.grid()`), with one GCV-selected parameter
/// pooled across curves.
pub fn smooth_curves(
    raw: &DMatrix<f64>,
    basis: &Basis,
    cfg: &SmoothingConfig,
) -> Result<SmoothResult> {
    cfg.validate()?;
    let phi = basis.eval_matrix();
    let m = phi.nrows();
    if raw.ncols() != m {
        return Err(Error::Dimension(format!(
            "curves have {} points, basis grid has {m}",
            raw.ncols()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("curves contain missing values".into()));
    }
    let ptp = phi.transpose() * phi;
    let yt = raw.transpose();
    let pty = phi.transpose() * &yt;
    let mut best: Option<(f64, f64, DMatrix<f64>, f64)> = None;
    let mut scores = Vec::with_capacity(cfg.gcv_grid.len());
    for &mu in &cfg.gcv_grid {
        let Some((coeffs_t, trace)) = ridge_fit(&ptp, &pty, basis.penalty(), mu) else {
            continue;
        };
        let fitted = phi * &coeffs_t;
        let rss = (&yt - fitted).norm_squared();
        let denom = m as f64 * (1.0 - trace / m as f64);
        let gcv = rss / (denom * denom);
        if !gcv.is_finite() || denom <= 0.0 {
            continue;
        }
        scores.push((mu, gcv));
        if best.as_ref().is_none_or(|b| gcv < b.1) {
            best = Some((mu, gcv, coeffs_t, trace));
        }
    }
    let (mu, _, coeffs_t, effective_df) = best.ok_or(Error::SmoothingFailed)?;
    Ok(SmoothResult {
        coeffs: coeffs_t.transpose(),
        mu,
        gcv: scores,
        effective_df,
    })
}

/// Smooths with a fixed parameter (no GCV search).
pub fn smooth_with(raw: &DMatrix<f64>, basis: &Basis, mu: f64) -> Result<DMatrix<f64>> {
    let phi = basis.eval_matrix();
    let ptp = phi.transpose() * phi;
    let pty = phi.transpose() * raw.transpose();
    let (c, _) = ridge_fit(&ptp, &pty, basis.penalty(), mu).ok_or(Error::SmoothingFailed)?;
    Ok(c.transpose())
}
