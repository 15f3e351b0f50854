//! Clamped B-spline bases with equally spaced knots on [0, 1].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::funspace::{Basis, BasisKind};

use super::SmoothingConfig;

/// Below this many grid points the basis size is capped at `4 * m`.
pub const SPARSE_GRID_THRESHOLD: usize = 30;

/// Knot vector and order of a clamped B-spline family.
#[derive(Debug, Clone)]
pub struct KnotVector {
    knots: Vec<f64>,
    order: usize,
    n_basis: usize,
}

impl KnotVector {
    /// `n_basis` functions of the given order with equally spaced interior
    /// knots and `order`-fold boundary knots at 0 and 1.
    pub fn uniform(n_basis: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidInput("spline order must be at least 1".into()));
        }
        if n_basis < order {
            return Err(Error::InvalidInput(format!(
                "n_basis ({n_basis}) must be at least the spline order ({order})"
            )));
        }
        let spans = n_basis - order + 1;
        let mut knots = Vec::with_capacity(n_basis + order);
        knots.extend(std::iter::repeat_n(0.0, order));
        for j in 1..spans {
            knots.push(j as f64 / spans as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, order));
        Ok(KnotVector {
            knots,
            order,
            n_basis,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Distinct breakpoints 0 = xi_0 < ... < xi_s = 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if b.last().is_none_or(|&l| k > l) {
                b.push(k);
            }
        }
        b
    }

    fn find_span(&self, t: f64) -> usize {
        let p = self.order - 1;
        let n = self.n_basis - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        if t <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n + 1);
        let mut mid = (lo + hi) / 2;
        while t < self.knots[mid] || t >= self.knots[mid + 1] {
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
            mid = (lo + hi) / 2;
        }
        mid
    }

    /// Values and derivatives up to `nderiv` of all basis functions at `t`.
    /// Entry `[d][j]` is the d-th derivative of function `j`.
    pub fn eval_derivs(&self, t: f64, nderiv: usize) -> Vec<Vec<f64>> {
        let p = self.order - 1;
        let span = self.find_span(t);
        let local = self.local_derivs(span, t, nderiv);
        let mut out = vec![vec![0.0; self.n_basis]; nderiv + 1];
        for (d, row) in local.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[d][span - p + j] = *v;
            }
        }
        out
    }

    /// Nonzero basis functions on `span` and their derivatives (de Boor /
    /// Cox recursion with the derivative triangle).
    fn local_derivs(&self, span: usize, t: f64, nderiv: usize) -> Vec<Vec<f64>> {
        let u = &self.knots;
        let p = self.order - 1;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nderiv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = nderiv.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=top {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=top {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Evaluation matrix (grid points x basis functions) of derivative `d`.
    pub fn design(&self, grid: &[f64], d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(grid.len(), self.n_basis);
        for (r, &t) in grid.iter().enumerate() {
            let ders = self.eval_derivs(t, d);
            for c in 0..self.n_basis {
                m[(r, c)] = ders[d][c];
            }
        }
        m
    }

    /// `int phi_i^(d) phi_j^(d)` over [0, 1], Gauss-Legendre per knot span
    /// with `points` nodes.
    pub fn gram_of_derivative(&self, d: usize, points: usize) -> DMatrix<f64> {
        let (nodes, weights) = gauss_legendre(points);
        let k = self.n_basis;
        let mut g = DMatrix::zeros(k, k);
        let bp = self.breakpoints();
        for w in bp.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, wt) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let ders = self.eval_derivs(t, d);
                let vals = &ders[d];
                let nz: Vec<usize> = (0..k).filter(|&j| vals[j] != 0.0).collect();
                for &i in &nz {
                    for &j in &nz {
                        g[(i, j)] += half * wt * vals[i] * vals[j];
                    }
                }
            }
        }
        (&g + g.transpose()) * 0.5
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / pp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput("grid needs at least 2 points".into()));
    }
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidInput("grid points must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Effective basis size after the sparse-grid cap.
pub fn effective_n_basis(requested: usize, grid_len: usize) -> usize {
    if grid_len < SPARSE_GRID_THRESHOLD {
        requested.min(4 * grid_len)
    } else {
        requested
    }
}

/// Penalized B-spline basis on `grid`: evaluation matrix by Cox-de Boor,
/// Gram and roughness penalty by exact Gauss-Legendre quadrature.
pub fn build_bspline_basis(grid: &[f64], cfg: &SmoothingConfig) -> Result<Basis> {
    cfg.validate()?;
    validate_grid(grid)?;
    let k = effective_n_basis(cfg.n_basis, grid.len()).max(cfg.spline_order);
    let knots = KnotVector::uniform(k, cfg.spline_order)?;
    // Products of two degree (order-1) pieces are exact with `order` nodes.
    let points = cfg.spline_order + 1;
    let gram = knots.gram_of_derivative(0, points);
    let penalty = if cfg.penalty_order < cfg.spline_order {
        knots.gram_of_derivative(cfg.penalty_order, points)
    } else {
        DMatrix::zeros(k, k)
    };
    let eval = knots.design(grid, 0);
    Ok(Basis::new(BasisKind::Bspline, gram, penalty, grid.to_vec(), eval)?
        .with_meta("spline_order", cfg.spline_order)
        .with_meta("penalty_order", cfg.penalty_order)
        .with_meta("n_basis_requested", cfg.n_basis)
        .with_meta("n_basis", k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson_gram(kv: &KnotVector, d: usize, intervals: usize) -> DMatrix<f64> {
        // Composite Simpson on each knot span separately (the integrand is
        // only piecewise smooth).
        let k = kv.n_basis();
        let mut g = DMatrix::zeros(k, k);
        let bp = kv.breakpoints();
        for w in bp.windows(2) {
            let h = (w[1] - w[0]) / intervals as f64;
            for s in 0..=intervals {
                let t = w[0] + h * s as f64;
                // Stay inside the span for derivative evaluation at its right end.
                let te = if s == intervals { t - 1e-13 } else { t };
                let coef = if s == 0 || s == intervals {
                    1.0
                } else if s % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let v = &kv.eval_derivs(te, d)[d];
                for i in 0..k {
                    for j in 0..k {
                        g[(i, j)] += coef * h / 3.0 * v[i] * v[j];
                    }
                }
            }
        }
        g
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact for degree 9
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((integral - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn partition_of_unity_single_interval() {
        let cfg = SmoothingConfig {
            n_basis: 4,
            ..SmoothingConfig::default()
        };
        let b = build_bspline_basis(&[0.0, 1.0], &cfg).unwrap();
        assert_eq!(b.dim(), 4);
        for r in 0..2 {
            let s: f64 = b.eval_matrix().row(r).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        let grid: Vec<f64> = (0..37).map(|i| i as f64 / 36.0).collect();
        let b = build_bspline_basis(&grid, &SmoothingConfig { n_basis: 13, ..Default::default() }).unwrap();
        for r in 0..grid.len() {
            assert!((b.eval_matrix().row(r).sum() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn penalty_annihilates_linear_functions() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        for k in [4, 10, 25, 100] {
            let b = build_bspline_basis(&grid, &SmoothingConfig { n_basis: k, ..Default::default() }).unwrap();
            // Greville abscissae give the coefficients of t exactly.
            let kv = KnotVector::uniform(k, 4).unwrap();
            let c: Vec<f64> = (0..k)
                .map(|j| (kv.knots[j + 1] + kv.knots[j + 2] + kv.knots[j + 3]) / 3.0 * 1.7 + 0.3)
                .collect();
            let vals = b.evaluate(&c);
            for (t, v) in grid.iter().zip(&vals) {
                assert!((v - (0.3 + 1.7 * t)).abs() < 1e-12);
            }
            let pc = b.penalty() * nalgebra::DVector::from_column_slice(&c);
            assert!(pc.amax() < 1e-8 * b.penalty().amax(), "k={k}: {}", pc.amax());
        }
    }

    #[test]
    fn gram_matches_refined_quadrature() {
        let kv = KnotVector::uniform(10, 4).unwrap();
        let gl = kv.gram_of_derivative(0, 5);
        let fine = simpson_gram(&kv, 0, 200);
        assert!((&gl - &fine).amax() < 1e-8);
        let pgl = kv.gram_of_derivative(2, 5);
        let pfine = simpson_gram(&kv, 2, 200);
        assert!((&pgl - &pfine).amax() < 1e-8 * pgl.amax());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let kv = KnotVector::uniform(12, 4).unwrap();
        let h = 1e-5;
        for &t in &[0.13, 0.5, 0.77] {
            let d = kv.eval_derivs(t, 2);
            let lo = kv.eval_derivs(t - h, 0);
            let hi = kv.eval_derivs(t + h, 0);
            for j in 0..12 {
                let fd1 = (hi[0][j] - lo[0][j]) / (2.0 * h);
                let fd2 = (hi[0][j] - 2.0 * d[0][j] + lo[0][j]) / (h * h);
                assert!((fd1 - d[1][j]).abs() < 1e-6 * (1.0 + d[1][j].abs()));
                assert!((fd2 - d[2][j]).abs() < 1e-3 * (1.0 + d[2][j].abs()));
            }
        }
    }

    #[test]
    fn grid_validation() {
        let cfg = SmoothingConfig::default();
        assert!(build_bspline_basis(&[0.0, 1.2], &cfg).is_err());
        assert!(build_bspline_basis(&[0.5, 0.2, 0.9], &cfg).is_err());
        assert!(build_bspline_basis(&[0.5], &cfg).is_err());
    }

    #[test]
    fn sparse_grid_cap() {
        let grid: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let b = build_bspline_basis(&grid, &SmoothingConfig::default()).unwrap();
        assert_eq!(b.dim(), 64);
        assert_eq!(b.meta("n_basis_requested"), Some("100"));
        let grid: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        assert_eq!(build_bspline_basis(&grid, &SmoothingConfig::default()).unwrap().dim(), 100);
    }
}
