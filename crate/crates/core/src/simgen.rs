//! Synthetic function-on-scalar data: Matérn Gaussian-process coefficient
//! functions and errors, AR(1)-correlated standardized predictors, and the
//! linear model `Y_n = sum_i X_ni beta_i + eps_n` on an even grid.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::KeyValue;

/// Jitter ladder for the covariance Cholesky, relative to `sigma2`.
pub const JITTER_START: f64 = 1e-12;
pub const JITTER_STOP: f64 = 1e-6;

/// Matérn smoothness; only the two half-integer cases with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// nu = 3/2, once differentiable paths.
    ThreeHalves,
    /// nu = 5/2, twice differentiable paths.
    FiveHalves,
}

impl Smoothness {
    pub fn nu(self) -> f64 {
        match self {
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }

    pub fn from_nu(nu: f64) -> Result<Self> {
        if nu == 1.5 {
            Ok(Smoothness::ThreeHalves)
        } else if nu == 2.5 {
            Ok(Smoothness::FiveHalves)
        } else {
            Err(Error::InvalidInput(format!(
                "Matérn smoothness must be 1.5 or 2.5, got {nu}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub sigma2: f64,
    pub range: f64,
    pub nu: Smoothness,
}

impl MaternParams {
    pub fn new(sigma2: f64, range: f64, nu: Smoothness) -> Result<Self> {
        if !(sigma2 > 0.0) || !(range > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Matérn needs sigma2 > 0 and range > 0, got {sigma2}, {range}"
            )));
        }
        Ok(MaternParams { sigma2, range, nu })
    }
}

/// Matérn covariance between `s` and `t`.
pub fn matern_cov(params: &MaternParams, s: f64, t: f64) -> f64 {
    let d = (s - t).abs();
    let tau = params.range;
    match params.nu {
        Smoothness::FiveHalves => {
            let a = 5f64.sqrt() * d / tau;
            params.sigma2 * (1.0 + a + 5.0 * d * d / (3.0 * tau * tau)) * (-a).exp()
        }
        Smoothness::ThreeHalves => {
            let a = 3f64.sqrt() * d / tau;
            params.sigma2 * (1.0 + a) * (-a).exp()
        }
    }
}

/// Covariance matrix on `grid`.
pub fn matern_matrix(params: &MaternParams, grid: &[f64]) -> DMatrix<f64> {
    let m = grid.len();
    DMatrix::from_fn(m, m, |i, j| matern_cov(params, grid[i], grid[j]))
}

/// Lower Cholesky factor of the Matérn matrix on `grid`, with the jitter
/// ladder applied when plain factorization fails.
pub fn matern_factor(params: &MaternParams, grid: &[f64]) -> Result<DMatrix<f64>> {
    let c = matern_matrix(params, grid);
    if let Some(ch) = c.clone().cholesky() {
        return Ok(ch.unpack());
    }
    let (l, _) =
        crate::linalg::cholesky_with_jitter(&c, params.sigma2, JITTER_START, JITTER_STOP)?;
    Ok(l)
}

/// `n` independent draws (rows) of the zero-mean Matérn process on `grid`.
pub fn sample_gp<R: rand::Rng + ?Sized>(
    params: &MaternParams,
    grid: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let l = matern_factor(params, grid)?;
    Ok(draw_with_factor(&l, n, rng))
}

fn draw_with_factor<R: rand::Rng + ?Sized>(l: &DMatrix<f64>, n: usize, rng: &mut R) -> DMatrix<f64> {
    let m = l.nrows();
    let z = DMatrix::from_fn(n, m, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
    z * l.transpose()
}

/// AR(1) design with `Cov(X_i, X_j) = rho^|i-j|`, columns standardized to
/// empirical mean 0 and (divide-by-N) variance 1.
pub fn sample_design<R: rand::Rng + ?Sized>(
    n: usize,
    p: usize,
    rho: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("rho must be in [0, 1), got {rho}")));
    }
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for r in 0..n {
        let mut prev = 0.0;
        for c in 0..p {
            let z: f64 = Distribution::<f64>::sample(&StandardNormal, rng);
            let v = if c == 0 { z } else { rho * prev + innov * z };
            x[(r, c)] = v;
            prev = v;
        }
    }
    standardize_columns(&mut x);
    Ok(x)
}

/// Centers each column and scales it to unit divide-by-N variance. Constant
/// columns are left at zero.
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for one replication of a campaign.
pub fn derive_seed(master: u64, replication: u64) -> u64 {
    splitmix64(master ^ splitmix64(replication.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub i: usize,
    pub i0: usize,
    pub grid_points: usize,
    pub tau_beta: f64,
    pub tau_eps: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub replications: usize,
    /// Debug switch: drop the error process so `Y = X beta` exactly.
    pub noise_free: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 500,
            i: 500,
            i0: 10,
            grid_points: 50,
            tau_beta: 0.25,
            tau_eps: 0.25,
            rho: 0.0,
            sigma2: 1.0,
            seed: 1,
            replications: 50,
            noise_free: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i0 > self.i {
            return Err(Error::InvalidInput(format!(
                "I0 ({}) exceeds I ({})",
                self.i0, self.i
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidInput("grid_points must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidInput(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if self.n == 0 || self.i == 0 {
            return Err(Error::InvalidInput("N and I must be positive".into()));
        }
        if !(self.sigma2 > 0.0 && self.tau_beta > 0.0 && self.tau_eps > 0.0) {
            return Err(Error::InvalidInput("sigma2 and ranges must be positive".into()));
        }
        Ok(())
    }

    /// Reads a key-value scenario. `N`, `I`, `I0` and `grid_points` are
    /// required; the rest default to the standard scenario.
    pub fn from_key_value(kv: &KeyValue) -> Result<Self> {
        let d = ScenarioConfig::default();
        let cfg = ScenarioConfig {
            n: kv.parse_required("N")?,
            i: kv.parse_required("I")?,
            i0: kv.parse_required("I0")?,
            grid_points: kv.parse_required("grid_points")?,
            tau_beta: kv.parse_or("tau_beta", d.tau_beta)?,
            tau_eps: kv.parse_or("tau_eps", d.tau_eps)?,
            rho: kv.parse_or("rho", d.rho)?,
            sigma2: kv.parse_or("sigma2", d.sigma2)?,
            seed: kv.parse_or("seed", d.seed)?,
            replications: kv.parse_or("replications", d.replications)?,
            noise_free: kv.parse_or("noise_free", d.noise_free)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_value(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.set("N", self.n);
        kv.set("I", self.i);
        kv.set("I0", self.i0);
        kv.set("grid_points", self.grid_points);
        kv.set("tau_beta", self.tau_beta);
        kv.set("tau_eps", self.tau_eps);
        kv.set("rho", self.rho);
        kv.set("sigma2", self.sigma2);
        kv.set("seed", self.seed);
        kv.set("replications", self.replications);
        kv.set("noise_free", self.noise_free);
        kv
    }

    pub fn grid(&self) -> Vec<f64> {
        even_grid(self.grid_points)
    }
}

/// `m` evenly spaced points from 0 to 1 inclusive.
pub fn even_grid(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|g| g as f64 / (m - 1) as f64).collect()
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// Raw curves, one row per subject, on `grid`.
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    /// True nonzero coefficient functions on `grid`.
    pub beta_true: DMatrix<f64>,
    pub support_true: Vec<usize>,
    pub grid: Vec<f64>,
    pub seed_used: u64,
}

/// Draws one replication. The seed is derived from `(cfg.seed,
/// replication)`; coefficients are drawn first, then the design, then the
/// errors.
pub fn generate_scenario(cfg: &ScenarioConfig, replication: u64) -> Result<SimulatedDataset> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, replication);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let grid = cfg.grid();
    let beta_params = MaternParams::new(cfg.sigma2, cfg.tau_beta, Smoothness::FiveHalves)?;
    let beta_true = if cfg.i0 > 0 {
        sample_gp(&beta_params, &grid, cfg.i0, &mut rng)?
    } else {
        DMatrix::zeros(0, grid.len())
    };
    let x = sample_design(cfg.n, cfg.i, cfg.rho, &mut rng)?;
    let mut y = x.columns(0, cfg.i0) * &beta_true;
    if !cfg.noise_free {
        let eps_params = MaternParams::new(cfg.sigma2, cfg.tau_eps, Smoothness::ThreeHalves)?;
        y += sample_gp(&eps_params, &grid, cfg.n, &mut rng)?;
    }
    Ok(SimulatedDataset {
        y,
        x,
        beta_true,
        support_true: (0..cfg.i0).collect(),
        grid,
        seed_used: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    /// Independent transcription of the two closed forms.
    fn matern_direct(nu: f64, sigma2: f64, tau: f64, d: f64) -> f64 {
        if nu == 2.5 {
            let r = d / tau;
            sigma2 * (1.0 + 5f64.sqrt() * r + 5.0 / 3.0 * r * r) * (-(5f64.sqrt()) * r).exp()
        } else {
            let r = d / tau;
            sigma2 * (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp()
        }
    }

    #[test]
    fn matern_examples() {
        let p52 = MaternParams::new(1.0, 0.25, Smoothness::FiveHalves).unwrap();
        let p32 = MaternParams::new(1.0, 1.0, Smoothness::ThreeHalves).unwrap();
        assert_eq!(matern_cov(&p52, 0.3, 0.3), 1.0);
        let v = matern_cov(&p52, 0.0, 0.25);
        // 1 + sqrt5 + 5/3, times exp(-sqrt5)
        assert!((v - 0.523_994_108_831_820_3).abs() < 1e-14, "{v}");
        let w = matern_cov(&p32, 0.0, 1.0);
        assert!((w - (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp()).abs() < 1e-15);
        assert!((w - 0.483_36).abs() < 1e-5);
        assert_eq!(matern_cov(&p32, 0.2, 0.7), matern_cov(&p32, 0.7, 0.2));
    }

    #[test]
    fn matern_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        for _ in 0..100 {
            let d: f64 = rng.random_range(0.0..1.0);
            let tau: f64 = rng.random_range(0.01..10.0);
            let s2: f64 = rng.random_range(0.1..5.0);
            for nu in [Smoothness::ThreeHalves, Smoothness::FiveHalves] {
                let p = MaternParams::new(s2, tau, nu).unwrap();
                let got = matern_cov(&p, 0.0, d);
                let want = matern_direct(nu.nu(), s2, tau, d);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn single_point_variance() {
        let p = MaternParams::new(4.0, 0.25, Smoothness::ThreeHalves).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = sample_gp(&p, &[0.5], 100_000, &mut rng).unwrap();
        let var = draws.iter().map(|v| v * v).sum::<f64>() / 100_000.0;
        assert!((var / 4.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = MaternParams::new(1.0, 0.25, Smoothness::FiveHalves).unwrap();
        let g = even_grid(20);
        let a = sample_gp(&p, &g, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_gp(&p, &g, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fine_grids_factor_with_jitter() {
        for tau in [0.25, 1.0, 10.0] {
            for nu in [Smoothness::ThreeHalves, Smoothness::FiveHalves] {
                let p = MaternParams::new(1.0, tau, nu).unwrap();
                let l = matern_factor(&p, &even_grid(200)).unwrap();
                let c = matern_matrix(&p, &even_grid(200));
                assert!((&l * l.transpose() - c).amax() < 1e-5);
            }
        }
    }

    #[test]
    fn design_standardized_and_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = sample_design(1000, 6, 0.0, &mut rng).unwrap();
        for c in 0..6 {
            let col = x.column(c);
            assert!(col.mean().abs() < 1e-12);
            assert!((col.norm_squared() / 1000.0 - 1.0).abs() < 1e-12);
        }
        let corr = x.transpose() * &x / 1000.0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(corr[(i, j)].abs() <= 0.1);
                }
            }
        }
        let x = sample_design(1000, 6, 0.99, &mut rng).unwrap();
        let corr = x.transpose() * &x / 1000.0;
        for i in 0..5 {
            assert!(corr[(i, i + 1)] >= 0.95);
        }
        assert!(sample_design(10, 3, 1.0, &mut rng).is_err());
    }

    #[test]
    fn scenario_shapes_and_determinism() {
        let cfg = ScenarioConfig {
            n: 500,
            i: 500,
            i0: 10,
            grid_points: 50,
            ..Default::default()
        };
        let d = generate_scenario(&cfg, 0).unwrap();
        assert_eq!(d.y.shape(), (500, 50));
        assert_eq!(d.x.shape(), (500, 500));
        assert_eq!(d.beta_true.shape(), (10, 50));
        assert_eq!(d.support_true, (0..10).collect::<Vec<_>>());
        let again = generate_scenario(&cfg, 0).unwrap();
        assert_eq!(d.y, again.y);
        assert_eq!(d.x, again.x);
        let other = generate_scenario(&cfg, 1).unwrap();
        assert_ne!(d.y, other.y);
        assert_ne!(d.seed_used, other.seed_used);
    }

    #[test]
    fn pure_noise_scenario_variance() {
        let cfg = ScenarioConfig {
            n: 1000,
            i: 3,
            i0: 0,
            grid_points: 20,
            ..Default::default()
        };
        let d = generate_scenario(&cfg, 3).unwrap();
        for g in 0..20 {
            let col = d.y.column(g);
            let var = col.norm_squared() / 1000.0;
            assert!((var - 1.0).abs() < 0.1, "point {g}: {var}");
        }
    }

    #[test]
    fn noise_free_scenario_is_exact() {
        let cfg = ScenarioConfig {
            n: 40,
            i: 8,
            i0: 3,
            grid_points: 16,
            noise_free: true,
            ..Default::default()
        };
        let d = generate_scenario(&cfg, 0).unwrap();
        let x1 = d.x.columns(0, 3).into_owned();
        let ls = crate::linalg::least_squares(&x1, &d.y).unwrap();
        assert!((ls - &d.beta_true).amax() < 1e-8);
    }

    #[test]
    fn beta_draws_smoother_than_errors() {
        let g = even_grid(50);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = sample_gp(&MaternParams::new(1.0, 0.25, Smoothness::FiveHalves).unwrap(), &g, 100, &mut rng).unwrap();
        let e = sample_gp(&MaternParams::new(1.0, 0.25, Smoothness::ThreeHalves).unwrap(), &g, 100, &mut rng).unwrap();
        let rough = |m: &DMatrix<f64>| {
            let mut s = 0.0;
            for r in 0..m.nrows() {
                for c in 1..m.ncols() - 1 {
                    let d2 = m[(r, c + 1)] - 2.0 * m[(r, c)] + m[(r, c - 1)];
                    s += d2 * d2;
                }
            }
            s / (m.nrows() * (m.ncols() - 2)) as f64
        };
        assert!(rough(&b) < rough(&e));
    }

    #[test]
    fn key_value_round_trip_and_missing_key() {
        let cfg = ScenarioConfig { n: 10, i: 5, i0: 2, grid_points: 16, ..Default::default() };
        let back = ScenarioConfig::from_key_value(&cfg.to_key_value()).unwrap();
        assert_eq!(cfg, back);
        let kv = KeyValue::parse("N = 10\nI = 5\ngrid_points = 16\n").unwrap();
        assert!(matches!(ScenarioConfig::from_key_value(&kv), Err(Error::MissingKey(k)) if k == "I0"));
    }
}
