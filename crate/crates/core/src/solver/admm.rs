//! ADMM for the group lasso with one functional coefficient per scalar
//! predictor, plus an active-set Newton polish.
//!
//! Everything here runs in whitened coordinates (outcome rows multiplied by
//! the Gram factor), where group norms are Euclidean, and on the objective
//! divided by N:
//!
//! ```text
//! F(B) = 1/(2N) ||Y - X B||_F^2 + kappa * sum_i w_i ||b_i||,   kappa = lambda / N
//! ```

use nalgebra::DMatrix;

use crate::linalg::sym_eigen_desc;

/// Spectral factor of `N^{-1} X^T X` restricted to its range:
/// `N^{-1} X^T X = W diag(d) W^T` with orthonormal columns in `W`.
#[derive(Debug, Clone)]
pub(crate) struct Spectral {
    w: DMatrix<f64>,
    d: Vec<f64>,
}

impl Spectral {
    pub(crate) fn new(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let nf = n as f64;
        if p == 0 {
            return Spectral { w: DMatrix::zeros(0, 0), d: Vec::new() };
        }
        if p <= n {
            let g = x.transpose() * x / nf;
            let (vals, vecs) = sym_eigen_desc(&g);
            let d = vals.iter().map(|v| v.max(0.0)).collect();
            Spectral { w: vecs, d }
        } else {
            // Right singular vectors from the smaller N x N problem.
            let g = x * x.transpose() / nf;
            let (vals, vecs) = sym_eigen_desc(&g);
            let top = vals.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
            let keep: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > top * 1e-13).collect();
            let u = DMatrix::from_fn(n, keep.len(), |r, c| vecs[(r, keep[c])]);
            let mut w = x.transpose() * u;
            let d: Vec<f64> = keep.iter().map(|&j| vals[j]).collect();
            for (c, dv) in d.iter().enumerate() {
                let s = 1.0 / (nf * dv).sqrt();
                w.column_mut(c).scale_mut(s);
            }
            Spectral { w, d }
        }
    }

    /// `(N^{-1} X^T X + rho I)^{-1} r`.
    pub(crate) fn solve(&self, rho: f64, r: &DMatrix<f64>) -> DMatrix<f64> {
        if self.d.is_empty() {
            return r / rho;
        }
        let mut proj = self.w.transpose() * r;
        for (j, mut row) in proj.row_iter_mut().enumerate() {
            row *= self.d[j] / (self.d[j] + rho);
        }
        (r - &self.w * proj) / rho
    }
}

/// Row-wise group soft threshold: `z_i = (1 - t_i / ||v_i||)^+ v_i`.
pub fn group_soft_threshold(v: &DMatrix<f64>, thresholds: &[f64]) -> DMatrix<f64> {
    let mut z = v.clone();
    for (i, mut row) in z.row_iter_mut().enumerate() {
        let nrm = row.norm();
        let t = thresholds[i];
        if !(nrm > t) || t.is_infinite() {
            row.fill(0.0);
        } else {
            row *= 1.0 - t / nrm;
        }
    }
    z
}

pub(crate) struct AdmmSettings {
    pub rho: f64,
    pub adaptive: bool,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

pub(crate) struct AdmmState {
    pub beta: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub rho: f64,
}

pub(crate) struct AdmmOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Runs ADMM from `state` until the primal and dual residuals meet the
/// usual absolute/relative tolerances.
pub(crate) fn run_admm(
    spectral: &Spectral,
    xty_n: &DMatrix<f64>,
    weights: &[f64],
    kappa: f64,
    settings: &AdmmSettings,
    state: &mut AdmmState,
) -> AdmmOutcome {
    let (p, k) = xty_n.shape();
    let sqrt_pk = ((p * k) as f64).sqrt();
    let mut thresholds = vec![0.0; p];
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let rho = state.rho;
        let rhs = xty_n + (&state.z - &state.u) * rho;
        state.beta = spectral.solve(rho, &rhs);
        for (t, w) in thresholds.iter_mut().zip(weights) {
            *t = kappa * w / rho;
        }
        let v = &state.beta + &state.u;
        let z_new = group_soft_threshold(&v, &thresholds);
        let primal = &state.beta - &z_new;
        state.u += &primal;
        let r_norm = primal.norm();
        let s_norm = rho * (&z_new - &state.z).norm();
        state.z = z_new;

        let eps_pri = sqrt_pk * settings.eps_abs
            + settings.eps_rel * state.beta.norm().max(state.z.norm());
        let eps_dual = sqrt_pk * settings.eps_abs + settings.eps_rel * rho * state.u.norm();
        if r_norm <= eps_pri && s_norm <= eps_dual {
            return AdmmOutcome { iterations, converged: true };
        }
        if settings.adaptive && iterations % 10 == 0 {
            if r_norm > 10.0 * s_norm {
                state.rho *= 2.0;
                state.u /= 2.0;
            } else if s_norm > 10.0 * r_norm {
                state.rho /= 2.0;
                state.u *= 2.0;
            }
        }
    }
    AdmmOutcome { iterations, converged: false }
}

/// Newton's method on the support of `b` (rows assumed nonzero), where the
/// objective is smooth. Returns `None` when a row collapses towards zero or
/// the iteration stalls, which means the support guess was wrong.
pub(crate) fn polish_on_support(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    support: &[usize],
    weights: &[f64],
    kappa: f64,
    b: &DMatrix<f64>,
    grad_tol: f64,
) -> Option<DMatrix<f64>> {
    let s = support.len();
    if s == 0 {
        return Some(b.clone());
    }
    let n = x.nrows() as f64;
    let k = b.ncols();
    let xs = crate::linalg::select_columns(x, support);
    let a = xs.transpose() * &xs / n;
    let c = xs.transpose() * y / n;
    let w: Vec<f64> = support.iter().map(|&i| weights[i]).collect();
    let mut bs = crate::linalg::select_rows(b, support);

    let objective = |bs: &DMatrix<f64>| -> f64 {
        // 1/(2N)||Y - X_S B||^2 up to a constant: 1/2 tr(B'AB) - tr(B'C)
        let ab = &a * bs;
        let quad = 0.5 * bs.dot(&ab) - bs.dot(&c);
        let pen: f64 = bs.row_iter().zip(&w).map(|(r, wi)| wi * r.norm()).sum();
        quad + kappa * pen
    };
    let gradient = |bs: &DMatrix<f64>| -> DMatrix<f64> {
        let mut g = &a * bs - &c;
        for (i, mut row) in g.row_iter_mut().enumerate() {
            let br = bs.row(i);
            let nr = br.norm();
            row += br * (kappa * w[i] / nr);
        }
        g
    };
    let max_row_norm = |m: &DMatrix<f64>| m.row_iter().map(|r| r.norm()).fold(0.0, f64::max);

    let mut f = objective(&bs);
    for _ in 0..60 {
        let g = gradient(&bs);
        if max_row_norm(&g) <= grad_tol {
            return Some(bs_to_full(b, support, &bs));
        }
        let norms: Vec<f64> = bs.row_iter().map(|r| r.norm()).collect();
        let scale = norms.iter().cloned().fold(0.0, f64::max);
        if norms.iter().any(|&v| v <= 1e-10 * scale.max(1e-300)) {
            return None;
        }
        let curv: Vec<f64> = (0..s).map(|i| kappa * w[i] / norms[i]).collect();
        let dirs: Vec<_> = (0..s).map(|i| bs.row(i) / norms[i]).collect();
        let hess = |d: &DMatrix<f64>| -> DMatrix<f64> {
            let mut out = &a * d;
            for i in 0..s {
                let di = d.row(i);
                let along = di.dot(&dirs[i]);
                let perp = di - &dirs[i] * along;
                let mut orow = out.row_mut(i);
                orow += perp * curv[i];
            }
            out
        };
        let precond = |r: &DMatrix<f64>| -> DMatrix<f64> {
            let mut out = r.clone();
            for i in 0..s {
                let aii = a[(i, i)].max(1e-12);
                let ri = r.row(i);
                let along = ri.dot(&dirs[i]);
                let perp = ri - &dirs[i] * along;
                let val = perp / (aii + curv[i]) + &dirs[i] * (along / aii);
                out.row_mut(i).copy_from(&val);
            }
            out
        };
        let rhs = -&g;
        let step = pcg(&hess, &precond, &rhs, 1e-14, (s * k).clamp(50, 2000));
        let slope = g.dot(&step);
        if !(slope < 0.0) {
            return None;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &bs + &step * t;
            let ft = objective(&trial);
            if ft <= f + 1e-4 * t * slope || (ft - f).abs() <= 1e-15 * f.abs().max(1.0) {
                bs = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    let g = gradient(&bs);
    if max_row_norm(&g) <= grad_tol * 10.0 {
        Some(bs_to_full(b, support, &bs))
    } else {
        None
    }
}

fn bs_to_full(template: &DMatrix<f64>, support: &[usize], bs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut full = DMatrix::zeros(template.nrows(), template.ncols());
    for (r, &i) in support.iter().enumerate() {
        full.row_mut(i).copy_from(&bs.row(r));
    }
    full
}

/// Preconditioned conjugate gradients on matrices viewed as vectors.
fn pcg<H, M>(hess: &H, precond: &M, rhs: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> DMatrix<f64>
where
    H: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    M: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let mut x = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    let mut r = rhs.clone();
    let target = rel_tol * rhs.norm();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        if r.norm() <= target {
            break;
        }
        let hp = hess(&p);
        let php = p.dot(&hp);
        if !(php > 0.0) {
            break;
        }
        let alpha = rz / php;
        x += &p * alpha;
        r -= &hp * alpha;
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    x
}
