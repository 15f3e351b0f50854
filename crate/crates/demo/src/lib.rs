//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Matrices cross the boundary as flat row-major `Vec<f64>`.

use std::sync::Arc;

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use funlasso::bench::{prepare, PipelineConfig};
use funlasso::funspace::Basis;
use funlasso::simgen::{generate_scenario, sample_gp, even_grid, MaternParams, ScenarioConfig, Smoothness};
use funlasso::solver::closed_form_orthogonal;
use funlasso::tuning::{geometric_path, select_fsl_afsl};

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn js_err(e: funlasso::Error) -> JsError {
    JsError::new(&e.to_string())
}

pub fn draws(nu: f64, range: f64, sigma2: f64, grid_points: usize, n: usize, seed: u64) -> funlasso::Result<Vec<f64>> {
    use rand_chacha::rand_core::SeedableRng;
    let params = MaternParams::new(sigma2, range, Smoothness::from_nu(nu)?)?;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    Ok(row_major(&sample_gp(&params, &even_grid(grid_points), n, &mut rng)?))
}

/// `n` Matérn sample paths (nu = 1.5 or 2.5) on an even grid of [0, 1].
#[wasm_bindgen]
pub fn matern_draws(nu: f64, range: f64, sigma2: f64, grid_points: usize, n: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    draws(nu, range, sigma2, grid_points, n, seed).map_err(js_err)
}

/// Rows `[lambda, |beta_1|, ..., |beta_p|]` of the orthogonal-design
/// solution path for least-squares norms `ls_norms`.
pub fn threshold_path(ls_norms: &[f64], weights: &[f64], n_lambda: usize) -> funlasso::Result<Vec<f64>> {
    let p = ls_norms.len();
    if p == 0 || weights.len() != p || n_lambda < 2 {
        return Err(funlasso::Error::InvalidInput("need matching norms and weights".into()));
    }
    // X = sqrt(p) I and Y = sqrt(p) z give X^T Y / N = z.
    let s = (p as f64).sqrt();
    let x = DMatrix::identity(p, p) * s;
    let y = DMatrix::from_column_slice(p, 1, ls_norms) * s;
    let basis = Arc::new(Basis::identity(1));
    let lmax = (0..p)
        .filter(|&i| weights[i] > 0.0 && weights[i].is_finite())
        .map(|i| p as f64 * ls_norms[i].abs() / weights[i])
        .fold(0.0, f64::max);
    let mut lambdas = geometric_path(lmax.max(1e-12), n_lambda - 1, 1e-3);
    lambdas.push(0.0);
    let mut out = Vec::with_capacity(n_lambda * (p + 1));
    for l in lambdas {
        let b = closed_form_orthogonal(&y, &x, basis.clone(), l, weights)?;
        out.push(l);
        out.extend(b.row_norms());
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn soft_threshold_path(ls_norms: Vec<f64>, weights: Vec<f64>, n_lambda: usize) -> Result<Vec<f64>, JsError> {
    threshold_path(&ls_norms, &weights, n_lambda).map_err(js_err)
}

/// Simulated data fitted with BIC-tuned FSL and AFSL; curves are on `grid`
/// with one row per predictor.
#[wasm_bindgen]
pub struct FitDemo {
    grid: Vec<f64>,
    truth: Vec<f64>,
    fsl: Vec<f64>,
    afsl: Vec<f64>,
    fsl_support: Vec<u32>,
    afsl_support: Vec<u32>,
    n_predictors: usize,
}

#[wasm_bindgen]
impl FitDemo {
    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone()
    }
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }
    pub fn fsl(&self) -> Vec<f64> {
        self.fsl.clone()
    }
    pub fn afsl(&self) -> Vec<f64> {
        self.afsl.clone()
    }
    pub fn fsl_support(&self) -> Vec<u32> {
        self.fsl_support.clone()
    }
    pub fn afsl_support(&self) -> Vec<u32> {
        self.afsl_support.clone()
    }
    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }
}

pub fn run_fit(n: usize, i: usize, i0: usize, rho: f64, seed: u64) -> funlasso::Result<FitDemo> {
    let cfg = ScenarioConfig {
        n,
        i,
        i0,
        grid_points: 40,
        rho,
        seed,
        replications: 1,
        ..Default::default()
    };
    let ds = generate_scenario(&cfg, 0)?;
    let pipe = PipelineConfig::default();
    let prep = prepare(&ds.y, &ds.grid, &pipe)?;
    let sel = select_fsl_afsl(&prep.fpc.scores, &ds.x, prep.fpc_basis.clone(), &pipe.path)?;
    let on_grid = |c: &DMatrix<f64>| row_major(&(prep.fpc.result.back_project(c) * prep.bspline.eval_matrix().transpose()));
    let mut truth = DMatrix::zeros(i, ds.grid.len());
    truth.rows_mut(0, i0).copy_from(&ds.beta_true);
    let support = |s: &[usize]| s.iter().map(|&v| v as u32).collect();
    Ok(FitDemo {
        grid: ds.grid.clone(),
        truth: row_major(&truth),
        fsl: on_grid(&sel.fsl().b_hat.coeffs),
        afsl: on_grid(&sel.afsl.b_hat.coeffs),
        fsl_support: support(&sel.fsl().support),
        afsl_support: support(&sel.afsl.support),
        n_predictors: i,
    })
}

#[wasm_bindgen]
pub fn fit_demo(n: usize, i: usize, i0: usize, rho: f64, seed: u64) -> Result<FitDemo, JsError> {
    run_fit(n, i, i0, rho, seed).map_err(js_err)
}
