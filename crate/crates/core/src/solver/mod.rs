//! FSL and AFSL estimation.
//!
//! The penalized criterion is
//!
//! ```text
//! 1/2 sum_n ||Y_n - X_n^T beta||^2 + lambda sum_i w_i ||beta_i||
//! ```
//!
//! with unit weights for FSL and `w_i = 1 / ||beta~_i||` from a preliminary
//! FSL fit for AFSL. Fits run ADMM on the whitened problem; the support is
//! read off the proximal iterate, which is exactly sparse.

mod admm;

use std::sync::Arc;
use web_time::Instant;

use nalgebra::DMatrix;

pub use admm::group_soft_threshold;
use admm::{polish_on_support, run_admm, AdmmSettings, AdmmState, Spectral};

use crate::error::{Error, Result};
use crate::funspace::{group_penalty, Basis, CoefficientMatrix};
use crate::linalg::{least_squares, select_columns};

/// Active-set stationarity tolerance, relative to `max(lambda, 1)`.
pub const KKT_ACTIVE_TOL: f64 = 1e-4;
/// Absolute tolerance on the inactive-set slack.
pub const KKT_SLACK_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub lambda: f64,
    /// Per-predictor weights; empty means all ones. `+inf` excludes a
    /// predictor.
    pub weights: Vec<f64>,
    /// Augmented-Lagrangian parameter on the N-normalized problem.
    pub admm_rho: f64,
    pub adaptive_rho: bool,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub warm_start: Option<CoefficientMatrix>,
    /// Refine the ADMM solution by Newton's method on its support.
    pub polish: bool,
    pub kkt_active_tol: f64,
    pub kkt_slack_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 0.0,
            weights: Vec::new(),
            admm_rho: 1.0,
            adaptive_rho: true,
            eps_abs: 1e-6,
            eps_rel: 1e-4,
            max_iter: 10_000,
            warm_start: None,
            polish: true,
            kkt_active_tol: KKT_ACTIVE_TOL,
            kkt_slack_tol: KKT_SLACK_TOL,
        }
    }
}

impl FitConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        FitConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(Error::InvalidInput("ADMM tolerances must be positive".into()));
        }
        if !(self.admm_rho > 0.0) {
            return Err(Error::InvalidInput("admm_rho must be positive".into()));
        }
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        Ok(())
    }

    fn resolved_weights(&self, p: usize) -> Result<Vec<f64>> {
        if self.weights.is_empty() {
            Ok(vec![1.0; p])
        } else if self.weights.len() == p {
            Ok(self.weights.clone())
        } else {
            Err(Error::Dimension(format!(
                "{} weights for {p} predictors",
                self.weights.len()
            )))
        }
    }
}

/// Violations of the optimality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Largest `||-X_i^T R + lambda w_i b_i / ||b_i||||` over the support.
    pub max_active_residual: f64,
    /// Largest `(||X_i^T R|| - lambda w_i)^+` off the support (finite weights).
    pub max_inactive_slack_violation: f64,
    /// Per-row value of whichever condition applies (0 for excluded rows).
    pub row_residuals: Vec<f64>,
}

impl KktReport {
    pub fn within(&self, lambda: f64, active_tol: f64, slack_tol: f64) -> bool {
        self.max_active_residual <= active_tol * lambda.max(1.0)
            && self.max_inactive_slack_violation <= slack_tol
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub b_hat: CoefficientMatrix,
    pub support: Vec<usize>,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub rss: f64,
    pub kkt: KktReport,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Final ADMM parameter, reused by warm-started path points.
    pub admm_rho: f64,
}

impl FitResult {
    pub fn df(&self) -> usize {
        self.support.len()
    }
}

fn check_shapes(y: &DMatrix<f64>, x: &DMatrix<f64>, basis: &Basis) -> Result<()> {
    if y.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "Y has {} rows but X has {}",
            y.nrows(),
            x.nrows()
        )));
    }
    if y.ncols() != basis.dim() {
        return Err(Error::Dimension(format!(
            "Y has {} columns, basis dimension is {}",
            y.ncols(),
            basis.dim()
        )));
    }
    Ok(())
}

/// Data shared by all fits on one `(Y, X, basis)`: whitened outcomes, cross
/// products and the spectral factor used by the ADMM ridge step.
#[derive(Debug, Clone)]
pub struct GroupLassoProblem {
    y_white: DMatrix<f64>,
    x: DMatrix<f64>,
    xty: DMatrix<f64>,
    spectral: Spectral,
    basis: Arc<Basis>,
}

impl GroupLassoProblem {
    pub fn new(y: &DMatrix<f64>, x: &DMatrix<f64>, basis: Arc<Basis>) -> Result<Self> {
        check_shapes(y, x, &basis)?;
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("no observations".into()));
        }
        let y_white = basis.whiten_rows(y);
        let xty = x.transpose() * &y_white;
        let spectral = Spectral::new(x);
        Ok(GroupLassoProblem {
            y_white,
            x: x.clone(),
            xty,
            spectral,
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `max_i ||X_i^T Y|| / w_i` over finite weights: the smallest lambda
    /// with an all-zero solution.
    pub fn lambda_max(&self, weights: &[f64]) -> Result<f64> {
        let w = resolve(weights, self.p())?;
        let mut best: Option<f64> = None;
        for (i, wi) in w.iter().enumerate() {
            if wi.is_infinite() {
                continue;
            }
            let g = self.xty.row(i).norm();
            let v = if *wi > 0.0 {
                g / wi
            } else if g > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        best.ok_or(Error::AllWeightsInfinite)
    }

    /// Minimizes the weighted group-lasso criterion.
    pub fn solve(&self, cfg: &FitConfig) -> Result<FitResult> {
        cfg.validate()?;
        let start = Instant::now();
        let weights = cfg.resolved_weights(self.p())?;
        if let Some(ws) = &cfg.warm_start {
            if ws.n_rows() != self.p() || ws.basis.dim() != self.basis.dim() {
                return Err(Error::Dimension("warm start has the wrong shape".into()));
            }
        }
        let finite: Vec<usize> = (0..self.p()).filter(|&i| weights[i].is_finite()).collect();
        if finite.len() < self.p() {
            // Excluded predictors are removed before solving.
            return self.solve_reduced(cfg, &weights, &finite, start);
        }
        let mut res = self.solve_all_finite(cfg, &weights)?;
        res.wall_time = start.elapsed().as_secs_f64();
        Ok(res)
    }

    /// `||X_i^T (Y - X B)||` in the outcome norm, for every predictor.
    pub fn correlations(&self, b: &CoefficientMatrix) -> Vec<f64> {
        let white = self.basis.whiten_rows(&b.coeffs);
        let grad = self.x.transpose() * (&self.y_white - &self.x * white);
        grad.row_iter().map(|r| r.norm()).collect()
    }

    /// Solves on a working set started from `candidates` and grows it with
    /// every predictor that violates the optimality conditions of the full
    /// problem, so the returned fit is checked against all predictors.
    pub fn solve_screened(&self, cfg: &FitConfig, candidates: &[usize]) -> Result<FitResult> {
        cfg.validate()?;
        let start = Instant::now();
        let weights = cfg.resolved_weights(self.p())?;
        let mut in_set = vec![false; self.p()];
        for &i in candidates {
            if i < self.p() && weights[i].is_finite() {
                in_set[i] = true;
            }
        }
        let mut iterations = 0;
        let mut sub = cfg.clone();
        for _ in 0..50 {
            sub.weights = weights
                .iter()
                .zip(&in_set)
                .map(|(&w, &keep)| if keep { w } else { f64::INFINITY })
                .collect();
            let r = self.solve(&sub)?;
            iterations += r.iterations;
            let white = self.basis.whiten_rows(&r.b_hat.coeffs);
            let mut full = self.finish(white, cfg.lambda, weights.clone(), iterations, r.admm_rho)?;
            let mut added = false;
            for i in 0..self.p() {
                if !in_set[i] && weights[i].is_finite() && full.kkt.row_residuals[i] > 0.0 {
                    in_set[i] = true;
                    added = true;
                }
            }
            if !added {
                full.converged = r.converged
                    && full.kkt.within(cfg.lambda, cfg.kkt_active_tol, cfg.kkt_slack_tol);
                full.wall_time = start.elapsed().as_secs_f64();
                return Ok(full);
            }
            sub.warm_start = Some(r.b_hat);
        }
        let mut res = self.solve(cfg)?;
        res.wall_time = start.elapsed().as_secs_f64();
        Ok(res)
    }

    fn solve_reduced(
        &self,
        cfg: &FitConfig,
        weights: &[f64],
        finite: &[usize],
        start: Instant,
    ) -> Result<FitResult> {
        let p = self.p();
        let k = self.basis.dim();
        let mut white = DMatrix::zeros(p, k);
        let mut iterations = 0;
        let mut converged = true;
        let mut rho = cfg.admm_rho;
        if !finite.is_empty() {
            let xs = select_columns(&self.x, finite);
            let sub = GroupLassoProblem {
                y_white: self.y_white.clone(),
                xty: xs.transpose() * &self.y_white,
                spectral: Spectral::new(&xs),
                x: xs,
                basis: self.basis.clone(),
            };
            let mut sub_cfg = cfg.clone();
            sub_cfg.weights = finite.iter().map(|&i| weights[i]).collect();
            sub_cfg.warm_start = cfg.warm_start.as_ref().map(|ws| CoefficientMatrix {
                coeffs: crate::linalg::select_rows(&ws.coeffs, finite),
                basis: ws.basis.clone(),
            });
            let r = sub.solve_all_finite(&sub_cfg, &sub_cfg.weights)?;
            let rw = self.basis.whiten_rows(&r.b_hat.coeffs);
            for (row, &i) in finite.iter().enumerate() {
                white.row_mut(i).copy_from(&rw.row(row));
            }
            iterations = r.iterations;
            converged = r.converged;
            rho = r.admm_rho;
        }
        let mut res = self.finish(white, cfg.lambda, weights.to_vec(), iterations, rho)?;
        res.converged = converged
            && res.kkt.within(cfg.lambda, cfg.kkt_active_tol, cfg.kkt_slack_tol);
        res.wall_time = start.elapsed().as_secs_f64();
        Ok(res)
    }

    fn solve_all_finite(&self, cfg: &FitConfig, weights: &[f64]) -> Result<FitResult> {
        let (p, k) = (self.p(), self.basis.dim());
        let n = self.n() as f64;
        let lambda = cfg.lambda;
        if p == 0 {
            return self.finish(DMatrix::zeros(0, k), lambda, weights.to_vec(), 0, cfg.admm_rho);
        }
        let lmax = self.lambda_max(weights)?;
        // A few ulps of slack absorb rounding in `lmax` itself.
        if lambda >= lmax * (1.0 - 8.0 * f64::EPSILON) {
            // Zero satisfies the inactive condition for every row.
            let mut r = self.finish(DMatrix::zeros(p, k), lambda, weights.to_vec(), 0, cfg.admm_rho)?;
            r.converged = r.kkt.within(lambda, cfg.kkt_active_tol, cfg.kkt_slack_tol);
            return Ok(r);
        }
        let kappa = lambda / n;
        let xty_n = &self.xty / n;
        let mut state = self.initial_state(cfg, weights, kappa);
        let mut settings = AdmmSettings {
            rho: cfg.admm_rho,
            adaptive: cfg.adaptive_rho,
            eps_abs: cfg.eps_abs,
            eps_rel: cfg.eps_rel,
            max_iter: cfg.max_iter,
        };
        let active_tol = cfg.kkt_active_tol * lambda.max(1.0);
        let mut iterations = 0;
        let mut best: Option<FitResult> = None;
        // Each round tightens the ADMM tolerances until the KKT report of
        // the (polished) iterate passes.
        for _round in 0..6 {
            settings.max_iter = cfg.max_iter.saturating_sub(iterations);
            if settings.max_iter == 0 {
                break;
            }
            let out = run_admm(&self.spectral, &xty_n, weights, kappa, &settings, &mut state);
            iterations += out.iterations;
            let mut candidate = state.z.clone();
            if cfg.polish {
                let support: Vec<usize> = (0..p).filter(|&i| candidate.row(i).norm() > 0.0).collect();
                // Gradient target in normalized units, well inside the tolerance.
                let grad_tol = 1e-2 * active_tol / n;
                if let Some(pol) = polish_on_support(
                    &self.x,
                    &self.y_white,
                    &support,
                    weights,
                    kappa,
                    &candidate,
                    grad_tol,
                ) {
                    candidate = pol;
                }
            }
            let res = self.finish(candidate, lambda, weights.to_vec(), iterations, state.rho)?;
            let ok = res.kkt.within(lambda, cfg.kkt_active_tol, cfg.kkt_slack_tol);
            let better = best.as_ref().is_none_or(|b| kkt_score(&res, active_tol, cfg.kkt_slack_tol) < kkt_score(b, active_tol, cfg.kkt_slack_tol));
            if ok {
                let mut res = res;
                res.converged = true;
                return Ok(res);
            }
            if better {
                best = Some(res);
            }
            if !out.converged {
                break;
            }
            settings.eps_abs *= 0.01;
            settings.eps_rel *= 0.01;
            settings.rho = state.rho;
        }
        let mut res = best.expect("at least one round ran");
        res.iterations = iterations;
        res.converged = false;
        Ok(res)
    }

    fn initial_state(&self, cfg: &FitConfig, weights: &[f64], kappa: f64) -> AdmmState {
        let (p, k) = (self.p(), self.basis.dim());
        let rho = cfg.admm_rho;
        match &cfg.warm_start {
            None => AdmmState {
                beta: DMatrix::zeros(p, k),
                z: DMatrix::zeros(p, k),
                u: DMatrix::zeros(p, k),
                rho,
            },
            Some(ws) => {
                let z = self.basis.whiten_rows(&ws.coeffs);
                let n = self.n() as f64;
                let grad = self.x.transpose() * (&self.y_white - &self.x * &z) / n;
                // Scaled dual set to a valid subgradient at the new lambda.
                let mut u = DMatrix::zeros(p, k);
                for i in 0..p {
                    let cap = kappa * weights[i];
                    let zr = z.row(i);
                    let zn = zr.norm();
                    if zn > 0.0 {
                        u.row_mut(i).copy_from(&(zr * (cap / (zn * rho))));
                    } else {
                        let g = grad.row(i);
                        let gn = g.norm();
                        let s = if gn > cap { cap / gn } else { 1.0 };
                        u.row_mut(i).copy_from(&(g * (s / rho)));
                    }
                }
                AdmmState { beta: z.clone(), z, u, rho }
            }
        }
    }

    /// Packages whitened coefficients into a result with objective, RSS and
    /// KKT report.
    fn finish(
        &self,
        white: DMatrix<f64>,
        lambda: f64,
        weights: Vec<f64>,
        iterations: usize,
        rho: f64,
    ) -> Result<FitResult> {
        let resid = &self.y_white - &self.x * &white;
        let rss = resid.norm_squared();
        let grad = self.x.transpose() * &resid;
        let kkt = kkt_from_parts(&white, &grad, lambda, &weights);
        let pen: f64 = white
            .row_iter()
            .zip(&weights)
            .filter(|(_, w)| w.is_finite())
            .map(|(r, w)| w * r.norm())
            .sum();
        let coeffs = self.basis.unwhiten_rows(&white);
        let support: Vec<usize> = (0..white.nrows()).filter(|&i| white.row(i).norm() > 0.0).collect();
        Ok(FitResult {
            b_hat: CoefficientMatrix::new(coeffs, self.basis.clone())?,
            support,
            lambda,
            weights,
            objective: 0.5 * rss + lambda * pen,
            rss,
            kkt,
            iterations,
            converged: true,
            wall_time: 0.0,
            admm_rho: rho,
        })
    }
}

fn kkt_score(r: &FitResult, active_tol: f64, slack_tol: f64) -> f64 {
    (r.kkt.max_active_residual / active_tol).max(r.kkt.max_inactive_slack_violation / slack_tol)
}

fn resolve(weights: &[f64], p: usize) -> Result<Vec<f64>> {
    if weights.is_empty() {
        Ok(vec![1.0; p])
    } else if weights.len() == p {
        Ok(weights.to_vec())
    } else {
        Err(Error::Dimension(format!("{} weights for {p} predictors", weights.len())))
    }
}

/// KKT report from whitened coefficients and `X^T R` (whitened).
fn kkt_from_parts(white: &DMatrix<f64>, grad: &DMatrix<f64>, lambda: f64, weights: &[f64]) -> KktReport {
    let mut max_active: f64 = 0.0;
    let mut max_slack: f64 = 0.0;
    let mut rows = Vec::with_capacity(white.nrows());
    for i in 0..white.nrows() {
        let b = white.row(i);
        let bn = b.norm();
        let g = grad.row(i);
        let w = weights[i];
        if w.is_infinite() {
            rows.push(0.0);
            continue;
        }
        if bn > 0.0 {
            let r = (-g + b * (lambda * w / bn)).norm();
            max_active = max_active.max(r);
            rows.push(r);
        } else {
            let v = (g.norm() - lambda * w).max(0.0);
            max_slack = max_slack.max(v);
            rows.push(v);
        }
    }
    KktReport {
        max_active_residual: max_active,
        max_inactive_slack_violation: max_slack,
        row_residuals: rows,
    }
}

/// Group lasso fit of `Y` (rows are outcomes in `basis`) on `X`.
pub fn fit_group_lasso(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    GroupLassoProblem::new(y, x, basis)?.solve(cfg)
}

/// FSL: unit weights.
pub fn fit_fsl(y: &DMatrix<f64>, x: &DMatrix<f64>, basis: Arc<Basis>, lambda: f64) -> Result<FitResult> {
    fit_group_lasso(y, x, basis, &FitConfig::with_lambda(lambda))
}

/// `1 / ||beta~_i||` on the preliminary support, `+inf` elsewhere.
pub fn adaptive_weights(fsl: &FitResult) -> Vec<f64> {
    fsl.b_hat
        .row_norms()
        .into_iter()
        .map(|n| if n > 0.0 { 1.0 / n } else { f64::INFINITY })
        .collect()
}

/// Weighted fit by change of variables `alpha_i = w_i beta_i`: excluded
/// predictors are dropped, the rest rescaled to `X_i / w_i`, the unit-weight
/// problem is solved and mapped back. The KKT report is computed on the
/// original parameterization.
pub fn fit_adaptive(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    weights: &[f64],
    cfg: &FitConfig,
) -> Result<FitResult> {
    let start = Instant::now();
    let (scaled, keep) = rescale_design(x, weights)?;
    let mut unit_cfg = rescaled_config(cfg, weights);
    unit_cfg.warm_start = cfg.warm_start.as_ref().map(|ws| {
        let mut a = DMatrix::zeros(keep.len(), ws.coeffs.ncols());
        for (r, &i) in keep.iter().enumerate() {
            a.row_mut(r).copy_from(&(ws.coeffs.row(i) * weights[i]));
        }
        CoefficientMatrix { coeffs: a, basis: ws.basis.clone() }
    });
    let alpha_fit = if keep.is_empty() {
        None
    } else {
        Some(fit_group_lasso(y, &scaled, basis.clone(), &unit_cfg)?)
    };
    let mut res = expand_adaptive(y, x, &basis, weights, &keep, alpha_fit.as_ref(), cfg)?;
    res.wall_time = start.elapsed().as_secs_f64();
    Ok(res)
}

/// Maps a unit-weight fit on the rescaled design back to `beta_i =
/// alpha_i / w_i`, with zeros for dropped predictors, and reports objective
/// and KKT in the original parameterization.
pub fn expand_adaptive(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: &Arc<Basis>,
    weights: &[f64],
    keep: &[usize],
    alpha_fit: Option<&FitResult>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let mut coeffs = DMatrix::zeros(x.ncols(), basis.dim());
    if let Some(a) = alpha_fit {
        for (r, &i) in keep.iter().enumerate() {
            coeffs.row_mut(i).copy_from(&(a.b_hat.coeffs.row(r) / weights[i]));
        }
    }
    let b_hat = CoefficientMatrix::new(coeffs, basis.clone())?;
    let mut res = evaluate_fit(y, x, &b_hat, cfg.lambda, weights)?;
    let (iterations, converged, rho, secs) =
        alpha_fit.map_or((0, true, cfg.admm_rho, 0.0), |a| (a.iterations, a.converged, a.admm_rho, a.wall_time));
    res.iterations = iterations;
    res.converged = converged && res.kkt.within(cfg.lambda, cfg.kkt_active_tol, cfg.kkt_slack_tol);
    res.admm_rho = rho;
    res.wall_time = secs;
    Ok(res)
}

/// Unit-weight settings for the rescaled problem. Residuals in the original
/// variables are `w_i` times those in the rescaled ones, so the tolerances
/// are divided by the largest finite weight.
pub fn rescaled_config(cfg: &FitConfig, weights: &[f64]) -> FitConfig {
    let wmax = weights
        .iter()
        .filter(|w| w.is_finite())
        .fold(1.0f64, |a, &b| a.max(b));
    FitConfig {
        weights: Vec::new(),
        warm_start: None,
        kkt_active_tol: cfg.kkt_active_tol / wmax,
        kkt_slack_tol: cfg.kkt_slack_tol / wmax,
        ..cfg.clone()
    }
}

/// Columns with finite weight, divided by their weight, and their indices.
pub fn rescale_design(x: &DMatrix<f64>, weights: &[f64]) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if weights.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "{} weights for {} predictors",
            weights.len(),
            x.ncols()
        )));
    }
    let keep: Vec<usize> = (0..x.ncols()).filter(|&i| weights[i].is_finite()).collect();
    if let Some(&bad) = keep.iter().find(|&&i| !(weights[i] > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "weight {bad} must be positive for the change of variables"
        )));
    }
    let mut scaled = select_columns(x, &keep);
    for (c, &i) in keep.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / weights[i]);
    }
    Ok((scaled, keep))
}

/// FSL at `lambda_fsl`, then AFSL at `lambda_afsl` with weights from the FSL
/// estimate.
pub fn fit_afsl(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    lambda_fsl: f64,
    lambda_afsl: f64,
) -> Result<(FitResult, FitResult)> {
    let fsl = fit_fsl(y, x, basis.clone(), lambda_fsl)?;
    let w = adaptive_weights(&fsl);
    let afsl = fit_adaptive(y, x, basis, &w, &FitConfig::with_lambda(lambda_afsl))?;
    Ok((fsl, afsl))
}

/// Objective, RSS, support and KKT report of given coefficients.
pub fn evaluate_fit(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    b_hat: &CoefficientMatrix,
    lambda: f64,
    weights: &[f64],
) -> Result<FitResult> {
    let basis = &b_hat.basis;
    check_shapes(y, x, basis)?;
    let w = resolve(weights, x.ncols())?;
    let pen = group_penalty(b_hat, &w)?;
    let y_white = basis.whiten_rows(y);
    let white = basis.whiten_rows(&b_hat.coeffs);
    let resid = &y_white - x * &white;
    let rss = resid.norm_squared();
    let grad = x.transpose() * &resid;
    let kkt = kkt_from_parts(&white, &grad, lambda, &w);
    Ok(FitResult {
        support: b_hat.support(),
        b_hat: b_hat.clone(),
        lambda,
        weights: w,
        objective: 0.5 * rss + lambda * pen,
        rss,
        kkt,
        iterations: 0,
        converged: true,
        wall_time: 0.0,
        admm_rho: 1.0,
    })
}

/// Optimality report for `b_hat` at `cfg.lambda` and `cfg.weights`.
pub fn kkt_check(
    b_hat: &CoefficientMatrix,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    cfg: &FitConfig,
) -> Result<KktReport> {
    let w = cfg.resolved_weights(x.ncols())?;
    if let Some(i) = w
        .iter()
        .enumerate()
        .find(|(i, wi)| wi.is_infinite() && b_hat.row_norm(*i) > 0.0)
        .map(|(i, _)| i)
    {
        return Err(Error::ExcludedNonzero(i));
    }
    Ok(evaluate_fit(y, x, b_hat, cfg.lambda, &w)?.kkt)
}

/// Closed-form solution when `N^{-1} X^T X = I`: group soft thresholding of
/// the least squares estimate, `(1 - lambda w_i / (N ||b_i^LS||))^+ b_i^LS`.
pub fn closed_form_orthogonal(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    lambda: f64,
    weights: &[f64],
) -> Result<CoefficientMatrix> {
    check_shapes(y, x, &basis)?;
    let n = x.nrows() as f64;
    let p = x.ncols();
    let gram = x.transpose() * x / n;
    let dev = (gram - DMatrix::<f64>::identity(p, p)).amax();
    if dev > 1e-8 {
        return Err(Error::NotOrthogonal(dev));
    }
    let w = resolve(weights, p)?;
    let ls = x.transpose() * y / n;
    let mut out = DMatrix::zeros(p, basis.dim());
    for i in 0..p {
        if w[i].is_infinite() {
            continue;
        }
        let row: Vec<f64> = ls.row(i).iter().copied().collect();
        let nrm = basis.norm_coeffs(&row);
        let thr = lambda * w[i] / n;
        if nrm > thr {
            out.row_mut(i).copy_from(&(ls.row(i) * (1.0 - thr / nrm)));
        }
    }
    CoefficientMatrix::new(out, basis)
}

/// Least squares on the true support, zeros elsewhere.
pub fn oracle_estimator(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    support_true: &[usize],
    basis: Arc<Basis>,
) -> Result<CoefficientMatrix> {
    check_shapes(y, x, &basis)?;
    if let Some(&bad) = support_true.iter().find(|&&i| i >= x.ncols()) {
        return Err(Error::InvalidInput(format!("support index {bad} out of range")));
    }
    let x1 = select_columns(x, support_true);
    let b1 = least_squares(&x1, y)?;
    let mut out = DMatrix::zeros(x.ncols(), basis.dim());
    for (r, &i) in support_true.iter().enumerate() {
        out.row_mut(i).copy_from(&b1.row(r));
    }
    CoefficientMatrix::new(out, basis)
}
