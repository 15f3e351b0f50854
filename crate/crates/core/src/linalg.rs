//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order; column `j` of the returned matrix pairs with value `j`.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    // Work with the smaller Gram matrix.
    let g = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let (vals, _) = sym_eigen_desc(&g);
    vals.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Cholesky factor of `c`, adding `jitter * scale * I` from `start` upward by
/// factors of ten until `stop` when plain factorization fails. Returns the
/// lower factor and the jitter used (0 when none was needed).
pub fn cholesky_with_jitter(
    c: &DMatrix<f64>,
    scale: f64,
    start: f64,
    stop: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n = c.nrows();
    let mut jitter = start;
    loop {
        let a = c + DMatrix::identity(n, n) * (jitter * scale);
        if let Some(ch) = a.cholesky() {
            return Ok((ch.unpack(), jitter));
        }
        jitter *= 10.0;
        if jitter > stop * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite(format!(
                "factorization failed with jitter up to {stop:e}"
            )));
        }
    }
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("system matrix".into()))?;
    Ok(ch.solve(b))
}

/// Least squares via the normal equations, failing on rank deficiency.
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    let xtx = x.transpose() * x;
    let (vals, _) = sym_eigen_desc(&xtx);
    let top = vals[0].max(f64::MIN_POSITIVE);
    let bottom = *vals.last().unwrap();
    if bottom <= top * 1e-12 {
        return Err(Error::RankDeficient(format!(
            "smallest/largest eigenvalue of X'X = {:e}",
            bottom / top
        )));
    }
    solve_spd(&xtx, &(x.transpose() * y))
}

/// Column subset of `x`.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |r, c| x[(r, cols[c])])
}

/// Row subset of `x`.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, c| x[(rows[r], c)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let (v, q) = sym_eigen_desc(&m);
        assert_eq!(v, vec![3.0, 1.0]);
        assert!((q[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_diag() {
        let m = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, -4.0, 0.0, 0.0]);
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn jitter_ladder_rescues_singular() {
        let c = DMatrix::from_element(3, 3, 1.0);
        let (l, j) = cholesky_with_jitter(&c, 1.0, 1e-12, 1e-6).unwrap();
        assert!(j > 0.0 && j <= 1e-6);
        assert!((&l * l.transpose() - &c).amax() < 1e-5);
        let neg = -DMatrix::<f64>::identity(2, 2);
        assert!(cholesky_with_jitter(&neg, 1.0, 1e-12, 1e-6).is_err());
    }

    #[test]
    fn least_squares_detects_rank_deficiency() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(least_squares(&x, &y), Err(Error::RankDeficient(_))));
    }
}
