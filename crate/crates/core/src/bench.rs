//! Replication campaigns, train/test prediction error and design
//! diagnostics.

use std::fmt::Write as _;
use std::sync::Arc;
use web_time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::funspace::{Basis, CoefficientMatrix};
use crate::io::{format_f64, KeyValue};
use crate::linalg::{select_columns, select_rows, spectral_norm, sym_eigen_desc};
use crate::prep::{
    build_bspline_basis, fpca, smooth_curves, smooth_with, SmoothingConfig, DEFAULT_TARGET_VARIANCE,
};
use crate::simgen::{derive_seed, generate_scenario, ScenarioConfig, SimulatedDataset};
use crate::solver::oracle_estimator;
use crate::tuning::{select_fsl_afsl, Criterion, PathConfig};

/// `(|hat ∩ true|, |hat \ true|)`.
pub fn selection_metrics(support_hat: &[usize], support_true: &[usize]) -> (usize, usize) {
    let tp = support_hat.iter().filter(|i| support_true.contains(i)).count();
    (tp, support_hat.len() - tp)
}

/// `sqrt(N^{-1} sum_n ||Y_n - X_n^T B||^2)` in the norm of `b_hat`'s basis;
/// `y` holds outcome coefficients in the same basis.
pub fn rmsp(b_hat: &CoefficientMatrix, y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<f64> {
    if y.nrows() != x.nrows() || x.ncols() != b_hat.n_rows() || y.ncols() != b_hat.basis.dim() {
        return Err(Error::Dimension("rmsp: inconsistent shapes".into()));
    }
    let resid = y - x * &b_hat.coeffs;
    let white = b_hat.basis.whiten_rows(&resid);
    Ok((white.norm_squared() / y.nrows() as f64).sqrt())
}

/// Means over successful replications of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchMetrics {
    pub true_positives: f64,
    pub false_positives: f64,
    pub rmsp: f64,
    /// Includes failed replications.
    pub mean_wall_time: f64,
    pub n_replications: usize,
    pub n_failed: usize,
}

/// Eigenvalue and irrepresentability summaries of a design against a true
/// support, and the minimum signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionDiagnostics {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `||S21 S11^{-1}||_op`; infinite when `S11` is singular.
    pub irrepresentable_phi: f64,
    pub b_n: f64,
    /// `b_N^2 N / (I0^2 log I)`.
    pub signal_ratio: f64,
}

/// `beta_true` holds the true coefficient functions of the support, one row
/// per entry of `support_true`.
pub fn diagnostics(
    x: &DMatrix<f64>,
    support_true: &[usize],
    beta_true: &CoefficientMatrix,
) -> Result<AssumptionDiagnostics> {
    if support_true.is_empty() {
        return Err(Error::InvalidInput("diagnostics need a nonempty support".into()));
    }
    if beta_true.n_rows() != support_true.len() {
        return Err(Error::Dimension(format!(
            "{} coefficient rows for a support of size {}",
            beta_true.n_rows(),
            support_true.len()
        )));
    }
    let (n, p) = x.shape();
    if let Some(&bad) = support_true.iter().find(|&&i| i >= p) {
        return Err(Error::InvalidInput(format!("support index {bad} out of range")));
    }
    let nf = n as f64;
    let x1 = select_columns(x, support_true);
    let rest: Vec<usize> = (0..p).filter(|i| !support_true.contains(i)).collect();
    let s11 = x1.transpose() * &x1 / nf;
    let (vals, _) = sym_eigen_desc(&s11);
    let sigma_max = vals[0];
    let sigma_min = vals[vals.len() - 1];
    let phi = if rest.is_empty() {
        0.0
    } else if sigma_min <= 1e-12 * sigma_max.max(f64::MIN_POSITIVE) {
        f64::INFINITY
    } else {
        match s11.clone().cholesky() {
            Some(ch) => {
                let x2 = select_columns(x, &rest);
                let s12 = x1.transpose() * x2 / nf;
                // S21 S11^{-1} = (S11^{-1} S12)^T
                spectral_norm(&ch.solve(&s12))
            }
            None => f64::INFINITY,
        }
    };
    let b_n = beta_true.row_norms().into_iter().fold(f64::INFINITY, f64::min);
    let i0 = support_true.len() as f64;
    let signal_ratio = if p > 1 {
        b_n * b_n * nf / (i0 * i0 * (p as f64).ln())
    } else {
        f64::INFINITY
    };
    Ok(AssumptionDiagnostics {
        sigma_min,
        sigma_max,
        irrepresentable_phi: phi,
        b_n,
        signal_ratio,
    })
}

/// Diagnostics of a simulated dataset, with coefficient norms taken on its
/// grid.
pub fn dataset_diagnostics(ds: &SimulatedDataset) -> Result<AssumptionDiagnostics> {
    let basis = Arc::new(Basis::raw_grid(ds.grid.clone())?);
    let beta = CoefficientMatrix::new(ds.beta_true.clone(), basis)?;
    diagnostics(&ds.x, &ds.support_true, &beta)
}

/// Preprocessing and model settings shared by campaign replications.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub smoothing: SmoothingConfig,
    pub target_variance: f64,
    pub path: PathConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            smoothing: SmoothingConfig::default(),
            target_variance: DEFAULT_TARGET_VARIANCE,
            path: PathConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Optional keys: `n_basis`, `spline_order`, `penalty_order`,
    /// `target_variance`, `n_lambda`, `lambda_min_ratio`, `criterion`,
    /// `ebic_gamma`, `max_df`.
    pub fn from_key_value(kv: &KeyValue) -> Result<Self> {
        let d = PipelineConfig::default();
        let mut path = d.path.clone();
        path.n_lambda = kv.parse_or("n_lambda", path.n_lambda)?;
        path.lambda_min_ratio = kv.parse_or("lambda_min_ratio", path.lambda_min_ratio)?;
        if let Some(c) = kv.get("criterion") {
            path.criterion = Criterion::parse(c)?;
        }
        path.ebic_gamma = kv.parse_or("ebic_gamma", path.ebic_gamma)?;
        if kv.get("max_df").is_some() {
            path.max_df = Some(kv.parse_required("max_df")?);
        }
        path.validate()?;
        let smoothing = SmoothingConfig {
            n_basis: kv.parse_or("n_basis", d.smoothing.n_basis)?,
            spline_order: kv.parse_or("spline_order", d.smoothing.spline_order)?,
            penalty_order: kv.parse_or("penalty_order", d.smoothing.penalty_order)?,
            ..d.smoothing
        };
        smoothing.validate()?;
        let target_variance = kv.parse_or("target_variance", d.target_variance)?;
        if !(target_variance > 0.0 && target_variance <= 1.0) {
            return Err(Error::InvalidInput("target_variance must lie in (0, 1]".into()));
        }
        Ok(PipelineConfig {
            smoothing,
            target_variance,
            path,
        })
    }

    pub fn to_key_value(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.set("n_basis", self.smoothing.n_basis);
        kv.set("spline_order", self.smoothing.spline_order);
        kv.set("penalty_order", self.smoothing.penalty_order);
        kv.set("target_variance", format_f64(self.target_variance));
        kv.set("n_lambda", self.path.n_lambda);
        kv.set("lambda_min_ratio", format_f64(self.path.lambda_min_ratio));
        kv.set("criterion", self.path.criterion.as_str());
        kv.set("ebic_gamma", format_f64(self.path.ebic_gamma));
        if let Some(m) = self.path.max_df {
            kv.set("max_df", m);
        }
        kv
    }
}

/// Raw curves turned into FPC scores.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bspline: Arc<Basis>,
    pub coeffs: DMatrix<f64>,
    pub mu: f64,
    pub fpc: crate::prep::FpcaOutput,
    pub fpc_basis: Arc<Basis>,
}

/// Smoothing with GCV followed by FPCA.
pub fn prepare(raw: &DMatrix<f64>, grid: &[f64], cfg: &PipelineConfig) -> Result<Prepared> {
    let bspline = Arc::new(build_bspline_basis(grid, &cfg.smoothing)?);
    let sm = smooth_curves(raw, &bspline, &cfg.smoothing)?;
    let fpc = fpca(&sm.coeffs, &bspline, cfg.target_variance)?;
    let fpc_basis = Arc::new(fpc.basis.clone());
    Ok(Prepared {
        bspline,
        coeffs: sm.coeffs,
        mu: sm.mu,
        fpc,
        fpc_basis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fsl,
    Afsl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fsl => "fsl",
            Method::Afsl => "afsl",
        }
    }
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub method: Method,
    pub tp: usize,
    pub fp: usize,
    pub rmsp: f64,
    pub lambda_selected: f64,
    pub df: usize,
    /// Total time of the method (AFSL includes its FSL stage).
    pub seconds: f64,
    /// Time of this method's own stage.
    pub stage_seconds: f64,
    /// `sqrt(N) ||B_hat - B_oracle||`.
    pub oracle_distance: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub scenario: ScenarioConfig,
    pub fsl: BenchMetrics,
    pub afsl: BenchMetrics,
    pub records: Vec<ReplicationRecord>,
    pub diagnostics: Vec<(usize, Option<AssumptionDiagnostics>)>,
}

fn run_replication(
    cfg: &ScenarioConfig,
    pipe: &PipelineConfig,
    rep: usize,
) -> (Vec<ReplicationRecord>, Option<AssumptionDiagnostics>) {
    let seed = derive_seed(cfg.seed, rep as u64);
    let failed = |msg: String, secs: f64| -> Vec<ReplicationRecord> {
        [Method::Fsl, Method::Afsl]
            .into_iter()
            .map(|method| ReplicationRecord {
                replication: rep,
                seed,
                method,
                tp: 0,
                fp: 0,
                rmsp: f64::NAN,
                lambda_selected: f64::NAN,
                df: 0,
                seconds: secs,
                stage_seconds: secs,
                oracle_distance: f64::NAN,
                converged: false,
                error: Some(msg.clone()),
            })
            .collect()
    };
    let ds = match generate_scenario(cfg, rep as u64) {
        Ok(d) => d,
        Err(e) => return (failed(e.to_string(), 0.0), None),
    };
    let diag = if ds.support_true.is_empty() {
        None
    } else {
        dataset_diagnostics(&ds).ok()
    };
    let start = Instant::now();
    let result = (|| -> Result<Vec<ReplicationRecord>> {
        let prep = prepare(&ds.y, &ds.grid, pipe)?;
        let y = &prep.fpc.scores;
        let sel = select_fsl_afsl(y, &ds.x, prep.fpc_basis.clone(), &pipe.path)?;
        let oracle = if ds.support_true.is_empty() {
            CoefficientMatrix::zeros(ds.x.ncols(), prep.fpc_basis.clone())
        } else {
            oracle_estimator(y, &ds.x, &ds.support_true, prep.fpc_basis.clone())?
        };
        let sqrt_n = (cfg.n as f64).sqrt();
        let mut out = Vec::with_capacity(2);
        for (method, fit, stage, total) in [
            (Method::Fsl, sel.fsl(), sel.fsl_seconds, sel.fsl_seconds),
            (Method::Afsl, &sel.afsl, sel.afsl_seconds, sel.fsl_seconds + sel.afsl_seconds),
        ] {
            let (tp, fp) = selection_metrics(&fit.support, &ds.support_true);
            let diff = CoefficientMatrix::new(&fit.b_hat.coeffs - &oracle.coeffs, prep.fpc_basis.clone())?;
            let dist = diff.row_norms().iter().map(|v| v * v).sum::<f64>().sqrt() * sqrt_n;
            out.push(ReplicationRecord {
                replication: rep,
                seed,
                method,
                tp,
                fp,
                rmsp: rmsp(&fit.b_hat, y, &ds.x)?,
                lambda_selected: fit.lambda,
                df: fit.df(),
                seconds: total,
                stage_seconds: stage,
                oracle_distance: dist,
                converged: fit.converged,
                error: None,
            });
        }
        Ok(out)
    })();
    match result {
        Ok(r) => (r, diag),
        Err(e) => (failed(e.to_string(), start.elapsed().as_secs_f64()), diag),
    }
}

fn aggregate(records: &[ReplicationRecord], method: Method) -> BenchMetrics {
    let all: Vec<&ReplicationRecord> = records.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&&ReplicationRecord> = all.iter().filter(|r| r.converged).collect();
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64, rows: &[&ReplicationRecord]| -> f64 {
        if rows.is_empty() {
            f64::NAN
        } else {
            rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
        }
    };
    let ok_rows: Vec<&ReplicationRecord> = ok.iter().map(|r| **r).collect();
    BenchMetrics {
        true_positives: mean(&|r| r.tp as f64, &ok_rows),
        false_positives: mean(&|r| r.fp as f64, &ok_rows),
        rmsp: mean(&|r| r.rmsp, &ok_rows),
        mean_wall_time: mean(&|r| r.seconds, &all),
        n_replications: all.len(),
        n_failed: all.len() - ok_rows.len(),
    }
}

/// Runs `cfg.replications` independent replications (in parallel when the
/// `parallel` feature is on, using the current rayon pool) and aggregates
/// per method. Non-converged or failed replications are kept in the records
/// but excluded from the selection and error means.
pub fn run_campaign(cfg: &ScenarioConfig, pipe: &PipelineConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    pipe.path.validate()?;
    let reps: Vec<usize> = (0..cfg.replications).collect();
    #[cfg(feature = "parallel")]
    let per_rep: Vec<_> = {
        use rayon::prelude::*;
        reps.par_iter().map(|&r| run_replication(cfg, pipe, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<_> = reps.iter().map(|&r| run_replication(cfg, pipe, r)).collect();

    let mut records = Vec::with_capacity(2 * reps.len());
    let mut diags = Vec::with_capacity(reps.len());
    for (rep, (recs, d)) in per_rep.into_iter().enumerate() {
        records.extend(recs);
        diags.push((rep, d));
    }
    Ok(CampaignResult {
        scenario: cfg.clone(),
        fsl: aggregate(&records, Method::Fsl),
        afsl: aggregate(&records, Method::Afsl),
        records,
        diagnostics: diags,
    })
}

impl CampaignResult {
    /// One row per replication and method. Seconds are written as 0 when
    /// `timing` is off so that reruns compare byte for byte.
    pub fn campaign_csv(&self, timing: bool) -> String {
        let s = &self.scenario;
        let mut out = String::from(
            "N,I,I0,grid_points,tau_beta,tau_eps,rho,replication,seed,method,tp,fp,rmsp,lambda_selected,df,seconds,stage_seconds,oracle_distance,converged,error\n",
        );
        for r in &self.records {
            let t = |v: f64| if timing { format_f64(v) } else { "0".into() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.n,
                s.i,
                s.i0,
                s.grid_points,
                format_f64(s.tau_beta),
                format_f64(s.tau_eps),
                format_f64(s.rho),
                r.replication,
                r.seed,
                r.method.as_str(),
                r.tp,
                r.fp,
                format_f64(r.rmsp),
                format_f64(r.lambda_selected),
                r.df,
                t(r.seconds),
                t(r.stage_seconds),
                format_f64(r.oracle_distance),
                u8::from(r.converged),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        out
    }

    pub fn summary_csv(&self, timing: bool) -> String {
        let s = &self.scenario;
        let mut out = String::from("N,I,I0,tau_eps,rho,method,replications,failed,tp,fp,rmsp,seconds\n");
        for (m, b) in [("fsl", &self.fsl), ("afsl", &self.afsl)] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.n,
                s.i,
                s.i0,
                format_f64(s.tau_eps),
                format_f64(s.rho),
                m,
                b.n_replications,
                b.n_failed,
                format_f64(b.true_positives),
                format_f64(b.false_positives),
                format_f64(b.rmsp),
                if timing { format_f64(b.mean_wall_time) } else { "0".into() }
            );
        }
        out
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("replication,sigma_min,sigma_max,phi,b_n,signal_ratio\n");
        for (rep, d) in &self.diagnostics {
            match d {
                Some(d) => {
                    let _ = writeln!(
                        out,
                        "{rep},{},{},{},{},{}",
                        format_f64(d.sigma_min),
                        format_f64(d.sigma_max),
                        format_f64(d.irrepresentable_phi),
                        format_f64(d.b_n),
                        format_f64(d.signal_ratio)
                    );
                }
                None => {
                    let _ = writeln!(out, "{rep},NaN,NaN,NaN,NaN,NaN");
                }
            }
        }
        out
    }

    pub fn mean_phi(&self) -> f64 {
        let v: Vec<f64> = self
            .diagnostics
            .iter()
            .filter_map(|(_, d)| d.as_ref().map(|d| d.irrepresentable_phi))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Mean FSL-stage and AFSL-stage seconds over all replications.
    pub fn stage_times(&self) -> (f64, f64) {
        let mean = |m: Method| {
            let v: Vec<f64> = self.records.iter().filter(|r| r.method == m).map(|r| r.stage_seconds).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        (mean(Method::Fsl), mean(Method::Afsl))
    }

    pub fn oracle_distances(&self, method: Method) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.converged)
            .map(|r| r.oracle_distance)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainTestConfig {
    pub split_fraction: f64,
    pub n_splits: usize,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

impl Default for TrainTestConfig {
    fn default() -> Self {
        TrainTestConfig {
            split_fraction: 0.8,
            n_splits: 10,
            seed: 1,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Test-set RMSE of both methods under one criterion for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord {
    pub split: usize,
    pub criterion: Criterion,
    pub n_train: usize,
    pub n_test: usize,
    pub fsl_rmse: f64,
    pub afsl_rmse: f64,
    pub fsl_df: usize,
    pub afsl_df: usize,
}

#[derive(Debug, Clone)]
pub struct TrainTestResult {
    pub splits: Vec<SplitRecord>,
}

impl TrainTestResult {
    /// Mean `(fsl, afsl)` test RMSE under a criterion.
    pub fn means(&self, criterion: Criterion) -> (f64, f64) {
        let rows: Vec<&SplitRecord> = self.splits.iter().filter(|s| s.criterion == criterion).collect();
        let k = rows.len().max(1) as f64;
        (
            rows.iter().map(|s| s.fsl_rmse).sum::<f64>() / k,
            rows.iter().map(|s| s.afsl_rmse).sum::<f64>() / k,
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,criterion,n_train,n_test,fsl_rmse,afsl_rmse,fsl_df,afsl_df\n");
        for s in &self.splits {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.split,
                s.criterion.as_str(),
                s.n_train,
                s.n_test,
                format_f64(s.fsl_rmse),
                format_f64(s.afsl_rmse),
                s.fsl_df,
                s.afsl_df
            );
        }
        out
    }
}

/// Train and test sizes for a split fraction.
pub fn split_sizes(n: usize, fraction: f64) -> (usize, usize) {
    let train = ((n as f64) * fraction).round() as usize;
    (train, n - train)
}

/// Repeated random splits: preprocessing and both fits on the training
/// part, RMSE of the test curves (smoothed with the training parameter) in
/// the spline norm, for BIC and EBIC.
pub fn train_test_rmse(
    raw: &DMatrix<f64>,
    x: &DMatrix<f64>,
    grid: &[f64],
    cfg: &TrainTestConfig,
) -> Result<TrainTestResult> {
    let n = raw.nrows();
    if x.nrows() != n {
        return Err(Error::Dimension("curves and design disagree on N".into()));
    }
    let (n_train, n_test) = split_sizes(n, cfg.split_fraction);
    if n_train < 2 || n_test == 0 {
        return Err(Error::InvalidInput(format!(
            "split {} of N={n} leaves an empty part",
            cfg.split_fraction
        )));
    }
    let mut splits = Vec::new();
    for s in 0..cfg.n_splits {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, s as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (tr, te) = idx.split_at(n_train);
        let prep = prepare(&select_rows(raw, tr), grid, &cfg.pipeline)?;
        // Scores are centered, so the design is centered on training means.
        let mut xtr = select_rows(x, tr);
        let mut xte = select_rows(x, te);
        let xbar = xtr.row_mean();
        for mut r in xtr.row_iter_mut() {
            r -= &xbar;
        }
        for mut r in xte.row_iter_mut() {
            r -= &xbar;
        }
        let test_coeffs = smooth_with(&select_rows(raw, te), &prep.bspline, prep.mu)?;
        for criterion in [Criterion::Bic, Criterion::Ebic] {
            let mut path = cfg.pipeline.path.clone();
            path.criterion = criterion;
            let sel = select_fsl_afsl(&prep.fpc.scores, &xtr, prep.fpc_basis.clone(), &path)?;
            let err = |b: &CoefficientMatrix| -> f64 {
                let coef = prep.fpc.result.back_project(&b.coeffs);
                let mut pred = &xte * coef;
                for mut r in pred.row_iter_mut() {
                    r += &prep.fpc.result.mean_coeffs;
                }
                let white = prep.bspline.whiten_rows(&(&test_coeffs - pred));
                (white.norm_squared() / n_test as f64).sqrt()
            };
            splits.push(SplitRecord {
                split: s,
                criterion,
                n_train,
                n_test,
                fsl_rmse: err(&sel.fsl().b_hat),
                afsl_rmse: err(&sel.afsl.b_hat),
                fsl_df: sel.fsl().df(),
                afsl_df: sel.afsl.df(),
            });
        }
    }
    Ok(TrainTestResult { splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng))
    }

    #[test]
    fn selection_examples() {
        let truth: Vec<usize> = (1..=10).collect();
        assert_eq!(selection_metrics(&truth, &truth), (10, 0));
        assert_eq!(selection_metrics(&[], &truth), (0, 0));
        assert_eq!(selection_metrics(&[1, 2, 11], &truth), (2, 1));
    }

    #[test]
    fn rmsp_examples() {
        let basis = Arc::new(Basis::identity(1));
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let zero = CoefficientMatrix::zeros(1, basis.clone());
        assert!((rmsp(&zero, &y, &x).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let x = random(20, 3, 1);
        let b = CoefficientMatrix::new(random(3, 1, 2), basis).unwrap();
        let y = &x * &b.coeffs;
        assert!(rmsp(&b, &y, &x).unwrap() < 1e-14);
    }

    #[test]
    fn rmsp_is_rotation_invariant() {
        let grid: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let bs = build_bspline_basis(&grid, &SmoothingConfig { n_basis: 8, ..Default::default() }).unwrap();
        let x = random(25, 4, 3);
        let b = random(4, 8, 4);
        let mut y = &x * &b + random(25, 8, 5);
        let mean = y.row_mean();
        for mut r in y.row_iter_mut() {
            r -= &mean;
        }
        let rot = fpca(&y, &bs, 1.0).unwrap();
        let fb = Arc::new(rot.basis.clone());
        let bcm = CoefficientMatrix::new(b.clone(), Arc::new(bs)).unwrap();
        let brot = CoefficientMatrix::new(rot.result.rotate(&b), fb).unwrap();
        let a = rmsp(&bcm, &y, &x).unwrap();
        let c = rmsp(&brot, &rot.scores, &x).unwrap();
        assert!((a - c).abs() < 1e-8);
    }

    #[test]
    fn diagnostics_orthogonal_support() {
        let n = 50;
        let x = random(n, 6, 6).qr().q() * (n as f64).sqrt();
        let basis = Arc::new(Basis::identity(2));
        let beta = CoefficientMatrix::new(DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 1.0, 0.0]), basis).unwrap();
        let d = diagnostics(&x, &[0, 3], &beta).unwrap();
        assert!((d.sigma_min - 1.0).abs() < 1e-10);
        assert!((d.sigma_max - 1.0).abs() < 1e-10);
        assert!(d.irrepresentable_phi < 1e-10);
        assert_eq!(d.b_n, 1.0);
        assert!((d.signal_ratio - 50.0 / (4.0 * 6f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_singular_support() {
        let mut x = random(30, 5, 7);
        let c = x.column(0).into_owned();
        x.set_column(1, &c);
        let beta = CoefficientMatrix::new(DMatrix::from_element(2, 1, 1.0), Arc::new(Basis::identity(1))).unwrap();
        assert!(diagnostics(&x, &[0, 1], &beta).unwrap().irrepresentable_phi.is_infinite());
    }

    #[test]
    fn phi_small_for_independent_design() {
        let cfg = ScenarioConfig { n: 500, i: 20, i0: 10, grid_points: 10, ..Default::default() };
        let mut total = 0.0;
        for rep in 0..5 {
            total += dataset_diagnostics(&generate_scenario(&cfg, rep).unwrap()).unwrap().irrepresentable_phi;
        }
        assert!(total / 5.0 < 0.5);
    }

    #[test]
    fn split_sizes_example() {
        assert_eq!(split_sizes(540, 0.8), (432, 108));
    }

    fn small_pipeline() -> PipelineConfig {
        PipelineConfig {
            smoothing: SmoothingConfig { n_basis: 12, ..Default::default() },
            target_variance: 0.99,
            path: PathConfig { n_lambda: 30, ..Default::default() },
        }
    }

    #[test]
    fn campaign_is_deterministic_and_aggregates() {
        let cfg = ScenarioConfig {
            n: 60,
            i: 30,
            i0: 3,
            grid_points: 20,
            replications: 2,
            seed: 9,
            ..Default::default()
        };
        let pipe = small_pipeline();
        let a = run_campaign(&cfg, &pipe).unwrap();
        let b = run_campaign(&cfg, &pipe).unwrap();
        assert_eq!(a.campaign_csv(false), b.campaign_csv(false));
        assert_eq!(a.summary_csv(false), b.summary_csv(false));
        assert_eq!(a.records.len(), 4);
        for m in [Method::Fsl, Method::Afsl] {
            let rows: Vec<_> = a.records.iter().filter(|r| r.method == m && r.converged).collect();
            let tp = rows.iter().map(|r| r.tp as f64).sum::<f64>() / rows.len() as f64;
            let metrics = if m == Method::Fsl { &a.fsl } else { &a.afsl };
            assert!((tp - metrics.true_positives).abs() < 1e-12);
            for r in &rows {
                assert_eq!(r.tp + r.fp, r.df);
            }
        }
    }

    #[test]
    fn noise_free_train_test_error_vanishes() {
        let scen = ScenarioConfig {
            n: 80,
            i: 10,
            i0: 2,
            grid_points: 20,
            noise_free: true,
            ..Default::default()
        };
        let ds = generate_scenario(&scen, 0).unwrap();
        let mut cfg = TrainTestConfig { n_splits: 2, ..Default::default() };
        cfg.pipeline = small_pipeline();
        cfg.pipeline.target_variance = 1.0;
        cfg.pipeline.path.lambda_min_ratio = 1e-10;
        cfg.pipeline.path.n_lambda = 60;
        let res = train_test_rmse(&ds.y, &ds.x, &ds.grid, &cfg).unwrap();
        assert_eq!(res.splits.len(), 4);
        for s in &res.splits {
            assert_eq!((s.n_train, s.n_test), (64, 16));
            assert!(s.afsl_rmse < 1e-6, "{s:?}");
        }
    }
}
