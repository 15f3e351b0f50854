//! Lambda paths and BIC / extended BIC model selection.

use std::sync::Arc;
use web_time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::funspace::Basis;
use crate::io::format_f64;
use crate::solver::{
    adaptive_weights, expand_adaptive, rescale_design, rescaled_config, FitConfig, FitResult,
    GroupLassoProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Bic,
    Ebic,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Bic => "bic",
            Criterion::Ebic => "ebic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "ebic" => Ok(Criterion::Ebic),
            other => Err(Error::InvalidInput(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Fsl,
    Afsl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fsl => "fsl",
            Mode::Afsl => "afsl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fsl" => Ok(Mode::Fsl),
            "afsl" => Ok(Mode::Afsl),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub criterion: Criterion,
    pub ebic_gamma: f64,
    /// The path stops after the first fit with more than this many selected
    /// predictors. `None` uses `min(I, N / 4)`.
    pub max_df: Option<usize>,
    /// Settings for each fit; `lambda`, `weights` and `warm_start` are
    /// overwritten along the path.
    pub fit: FitConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            criterion: Criterion::Bic,
            ebic_gamma: 0.2,
            max_df: None,
            fit: FitConfig::default(),
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda < 2 {
            return Err(Error::InvalidInput("n_lambda must be at least 2".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidInput("lambda_min_ratio must lie in (0, 1)".into()));
        }
        if !(self.ebic_gamma >= 0.0) {
            return Err(Error::InvalidInput("ebic_gamma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn effective_max_df(&self, n: usize, p: usize) -> usize {
        self.max_df.unwrap_or_else(|| p.min(n / 4).max(1))
    }
}

/// Decreasing geometric grid from `lambda_max` to `lambda_max * ratio`.
pub fn geometric_path(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    let step = ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda)
        .map(|j| {
            if j == 0 {
                lambda_max
            } else if j == n_lambda - 1 {
                lambda_max * ratio
            } else {
                lambda_max * (step * j as f64).exp()
            }
        })
        .collect()
}

/// Path anchored at the smallest lambda giving the zero fit.
pub fn lambda_path(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    weights: &[f64],
    cfg: &PathConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let prob = GroupLassoProblem::new(y, x, basis)?;
    let lmax = prob.lambda_max(weights)?;
    Ok(geometric_path(lmax, cfg.n_lambda, cfg.lambda_min_ratio))
}

/// `N log(RSS/N) + df log N`, plus `2 gamma df log I` for EBIC. `-inf` when
/// the fit is exact.
pub fn criterion_value(rss: f64, df: usize, n: usize, p: usize, criterion: Criterion, gamma: f64) -> f64 {
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let dff = df as f64;
    let bic = nf * (rss / nf).ln() + dff * nf.ln();
    match criterion {
        Criterion::Bic => bic,
        Criterion::Ebic => bic + 2.0 * gamma * dff * (p as f64).ln(),
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub mode: Mode,
    /// Lambdas actually fitted (a prefix of the grid when truncated).
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
    pub bic: Vec<f64>,
    pub ebic: Vec<f64>,
    pub criterion: Criterion,
    pub selected_index: usize,
    /// Whether the path stopped early at the df cap.
    pub truncated: bool,
    pub wall_time: f64,
}

impl PathResult {
    pub fn criterion_values(&self) -> &[f64] {
        match self.criterion {
            Criterion::Bic => &self.bic,
            Criterion::Ebic => &self.ebic,
        }
    }

    pub fn selected(&self) -> &FitResult {
        &self.fits[self.selected_index]
    }

    /// Columns: lambda, df, rss, bic, ebic, converged, iterations, wall_time.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("lambda,df,rss,bic,ebic,converged,iterations,wall_time\n");
        for (j, f) in self.fits.iter().enumerate() {
            let secs = if timing { f.wall_time } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                format_f64(self.lambdas[j]),
                f.df(),
                format_f64(f.rss),
                format_f64(self.bic[j]),
                format_f64(self.ebic[j]),
                u8::from(f.converged),
                f.iterations,
                format_f64(secs)
            ));
        }
        out
    }
}

/// Warm-started, screened fits along `lambdas` with unit weights on `prob`.
fn run_path(
    prob: &GroupLassoProblem,
    lambdas: &[f64],
    base: &FitConfig,
    max_df: usize,
) -> Result<(Vec<FitResult>, bool)> {
    let mut fits: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    let mut prev_corr: Option<Vec<f64>> = None;
    for (j, &lambda) in lambdas.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.lambda = lambda;
        cfg.weights = Vec::new();
        let candidates: Vec<usize> = match (&prev_corr, fits.last()) {
            (Some(corr), Some(prev)) => {
                // Sequential strong rule.
                let cut = 2.0 * lambda - lambdas[j - 1];
                cfg.warm_start = Some(prev.b_hat.clone());
                cfg.admm_rho = prev.admm_rho;
                (0..prob.p())
                    .filter(|&i| corr[i] >= cut || prev.support.binary_search(&i).is_ok())
                    .collect()
            }
            _ => Vec::new(),
        };
        let fit = prob.solve_screened(&cfg, &candidates)?;
        prev_corr = Some(prob.correlations(&fit.b_hat));
        let df = fit.df();
        fits.push(fit);
        if df > max_df {
            return Ok((fits, j + 1 < lambdas.len()));
        }
    }
    Ok((fits, false))
}

fn assemble(
    mode: Mode,
    lambdas: &[f64],
    fits: Vec<FitResult>,
    truncated: bool,
    n: usize,
    p: usize,
    cfg: &PathConfig,
    wall_time: f64,
) -> PathResult {
    let bic: Vec<f64> = fits
        .iter()
        .map(|f| criterion_value(f.rss, f.df(), n, p, Criterion::Bic, cfg.ebic_gamma))
        .collect();
    let ebic: Vec<f64> = fits
        .iter()
        .map(|f| criterion_value(f.rss, f.df(), n, p, Criterion::Ebic, cfg.ebic_gamma))
        .collect();
    let vals = match cfg.criterion {
        Criterion::Bic => &bic,
        Criterion::Ebic => &ebic,
    };
    // First minimum: ties go to the sparser model.
    let mut selected_index = 0;
    for (j, v) in vals.iter().enumerate() {
        if *v < vals[selected_index] {
            selected_index = j;
        }
    }
    PathResult {
        mode,
        lambdas: lambdas[..fits.len()].to_vec(),
        fits,
        bic,
        ebic,
        criterion: cfg.criterion,
        selected_index,
        truncated,
        wall_time,
    }
}

/// FSL path over the default grid with unit weights.
pub fn fsl_path(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    cfg: &PathConfig,
) -> Result<PathResult> {
    cfg.validate()?;
    let start = Instant::now();
    let prob = GroupLassoProblem::new(y, x, basis)?;
    let lmax = prob.lambda_max(&[])?;
    let lambdas = geometric_path(lmax, cfg.n_lambda, cfg.lambda_min_ratio);
    let max_df = cfg.effective_max_df(x.nrows(), x.ncols());
    let (fits, truncated) = run_path(&prob, &lambdas, &cfg.fit, max_df)?;
    Ok(assemble(
        Mode::Fsl,
        &lambdas,
        fits,
        truncated,
        x.nrows(),
        x.ncols(),
        cfg,
        start.elapsed().as_secs_f64(),
    ))
}

/// Weighted path solved through the change of variables `alpha_i = w_i
/// beta_i`; fits are reported in the original variables.
pub fn weighted_path(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    weights: &[f64],
    cfg: &PathConfig,
) -> Result<PathResult> {
    cfg.validate()?;
    let start = Instant::now();
    let (scaled, keep) = rescale_design(x, weights)?;
    if keep.is_empty() {
        return Err(Error::AllWeightsInfinite);
    }
    let prob = GroupLassoProblem::new(y, &scaled, basis.clone())?;
    let lmax = prob.lambda_max(&[])?;
    let lambdas = geometric_path(lmax, cfg.n_lambda, cfg.lambda_min_ratio);
    let unit = rescaled_config(&cfg.fit, weights);
    let max_df = cfg.effective_max_df(x.nrows(), x.ncols());
    let (alpha_fits, truncated) = run_path(&prob, &lambdas, &unit, max_df)?;
    let mut fits = Vec::with_capacity(alpha_fits.len());
    for a in &alpha_fits {
        let mut c = cfg.fit.clone();
        c.lambda = a.lambda;
        fits.push(expand_adaptive(y, x, &basis, weights, &keep, Some(a), &c)?);
    }
    Ok(assemble(
        Mode::Afsl,
        &lambdas,
        fits,
        truncated,
        x.nrows(),
        x.ncols(),
        cfg,
        start.elapsed().as_secs_f64(),
    ))
}

/// Both stages of a selection run with their wall times.
#[derive(Debug, Clone)]
pub struct Selection {
    pub fsl_path: PathResult,
    pub fsl_seconds: f64,
    /// `None` when FSL selects no predictor (all adaptive weights infinite).
    pub afsl_path: Option<PathResult>,
    pub afsl_seconds: f64,
    pub afsl: FitResult,
}

impl Selection {
    pub fn fsl(&self) -> &FitResult {
        self.fsl_path.selected()
    }
}

/// FSL selected by the criterion, then AFSL with weights from that fit,
/// selected by its own sweep.
pub fn select_fsl_afsl(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    cfg: &PathConfig,
) -> Result<Selection> {
    let t0 = Instant::now();
    let fsl_path = fsl_path(y, x, basis.clone(), cfg)?;
    let fsl_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let weights = adaptive_weights(fsl_path.selected());
    let (afsl_path, afsl) = if weights.iter().all(|w| w.is_infinite()) {
        let mut c = cfg.fit.clone();
        c.lambda = 0.0;
        let keep: Vec<usize> = Vec::new();
        (None, expand_adaptive(y, x, &basis, &weights, &keep, None, &c)?)
    } else {
        let path = weighted_path(y, x, basis, &weights, cfg)?;
        let chosen = path.selected().clone();
        (Some(path), chosen)
    };
    Ok(Selection {
        fsl_path,
        fsl_seconds,
        afsl_path,
        afsl_seconds: t1.elapsed().as_secs_f64(),
        afsl,
    })
}

/// Path and chosen fit for one mode. For AFSL the returned path is the
/// reweighted one.
pub fn select_model(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: Arc<Basis>,
    mode: Mode,
    cfg: &PathConfig,
) -> Result<(PathResult, FitResult)> {
    match mode {
        Mode::Fsl => {
            let path = fsl_path(y, x, basis, cfg)?;
            let chosen = path.selected().clone();
            Ok((path, chosen))
        }
        Mode::Afsl => {
            let sel = select_fsl_afsl(y, x, basis, cfg)?;
            let path = sel.afsl_path.unwrap_or(sel.fsl_path);
            Ok((path, sel.afsl))
        }
    }
}
