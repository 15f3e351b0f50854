//! Elements of a separable Hilbert space held as coefficient vectors.
//!
//! Every space is represented through a finite basis with an explicit Gram
//! matrix `G`, so `<x, y> = x^T G y`. L2, Sobolev and RKHS spaces differ only
//! in `G`. The Cholesky factor `G = L L^T` is computed once at construction;
//! multiplying a coefficient row by `L` ("whitening") turns the G-norm into
//! the Euclidean norm, which is how the solver keeps its proximal step closed
//! form.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::io::{format_f64, parse_f64};

/// Relative tolerance for the Gram symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Bspline,
    Fpc,
    RawGrid,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Bspline => "bspline",
            BasisKind::Fpc => "fpc",
            BasisKind::RawGrid => "raw-grid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "bspline" => Ok(BasisKind::Bspline),
            "fpc" => Ok(BasisKind::Fpc),
            "raw-grid" => Ok(BasisKind::RawGrid),
            other => Err(Error::Parse(format!("unknown basis kind `{other}`"))),
        }
    }
}

/// Basis metadata: Gram matrix, roughness penalty and grid evaluation matrix.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    gram: DMatrix<f64>,
    penalty: DMatrix<f64>,
    grid: Vec<f64>,
    eval: DMatrix<f64>,
    /// Lower Cholesky factor of `gram`.
    factor: DMatrix<f64>,
    identity_gram: bool,
    /// Free-form provenance (spline order, requested size, ...), serialized
    /// with the basis.
    meta: Vec<(String, String)>,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.gram == other.gram
            && self.grid == other.grid
            && self.eval == other.eval
    }
}

impl Basis {
    /// Builds a basis after checking that `gram` is symmetric and positive
    /// definite and that the matrix shapes agree.
    pub fn new(
        kind: BasisKind,
        gram: DMatrix<f64>,
        penalty: DMatrix<f64>,
        grid: Vec<f64>,
        eval: DMatrix<f64>,
    ) -> Result<Self> {
        let k = gram.nrows();
        if k == 0 || gram.ncols() != k {
            return Err(Error::Dimension(format!(
                "gram must be square and nonempty, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if penalty.shape() != (k, k) {
            return Err(Error::Dimension(format!(
                "penalty is {:?}, expected {k}x{k}",
                penalty.shape()
            )));
        }
        if eval.shape() != (grid.len(), k) {
            return Err(Error::Dimension(format!(
                "evaluation matrix is {:?}, expected {}x{k}",
                eval.shape(),
                grid.len()
            )));
        }
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        let asym = (&gram - gram.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "gram is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let identity_gram = gram == DMatrix::identity(k, k);
        if kind == BasisKind::Fpc && (&gram - DMatrix::<f64>::identity(k, k)).amax() > 1e-10 {
            return Err(Error::InvalidInput(
                "an fpc basis must have identity gram".into(),
            ));
        }
        let factor = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("gram".into()))?
            .unpack();
        Ok(Basis {
            kind,
            gram,
            penalty,
            grid,
            eval,
            factor,
            identity_gram,
            meta: Vec::new(),
        })
    }

    /// Orthonormal basis of dimension `k` with no grid attached.
    pub fn identity(k: usize) -> Self {
        Basis::new(
            BasisKind::Fpc,
            DMatrix::identity(k, k),
            DMatrix::zeros(k, k),
            Vec::new(),
            DMatrix::zeros(0, k),
        )
        .expect("identity basis is valid")
    }

    /// Functions stored by their values on `grid`, with Riemann weight
    /// `1/m` so that the norm approximates the L2 norm on [0, 1].
    pub fn raw_grid(grid: Vec<f64>) -> Result<Self> {
        let m = grid.len();
        if m == 0 {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        let dt = 1.0 / m as f64;
        Basis::new(
            BasisKind::RawGrid,
            DMatrix::identity(m, m) * dt,
            DMatrix::zeros(m, m),
            grid,
            DMatrix::identity(m, m),
        )
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.retain(|(k, _)| k != key);
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Evaluation matrix: grid points by basis functions.
    pub fn eval_matrix(&self) -> &DMatrix<f64> {
        &self.eval
    }

    /// Lower-triangular `L` with `G = L L^T`.
    pub fn gram_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn has_identity_gram(&self) -> bool {
        self.identity_gram
    }

    /// `x^T G y` on raw coefficient slices.
    pub fn inner_coeffs(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        if self.identity_gram {
            return x.iter().zip(y).map(|(a, b)| a * b).sum();
        }
        let k = self.dim();
        let mut acc = 0.0;
        for j in 0..k {
            let mut gy = 0.0;
            for l in 0..k {
                gy += self.gram[(j, l)] * y[l];
            }
            acc += x[j] * gy;
        }
        acc
    }

    pub fn norm_coeffs(&self, x: &[f64]) -> f64 {
        self.inner_coeffs(x, x).max(0.0).sqrt()
    }

    /// Maps coefficient rows `M` (rows are functions) to `M L`, whose rows
    /// have Euclidean norm equal to the G-norm of the originals.
    pub fn whiten_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity_gram {
            m.clone()
        } else {
            m * &self.factor
        }
    }

    /// Inverse of [`Basis::whiten_rows`]: `W L^{-1}`.
    pub fn unwhiten_rows(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity_gram {
            return w.clone();
        }
        // Solve X L = W  <=>  L^T X^T = W^T.
        let lt = self.factor.transpose();
        let xt = lt
            .solve_upper_triangular(&w.transpose())
            .expect("cholesky factor has a positive diagonal");
        xt.transpose()
    }

    /// Values of the function with coefficients `coeffs` on the grid.
    pub fn evaluate(&self, coeffs: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coeffs);
        (&self.eval * c).iter().copied().collect()
    }

    /// Writes the text serialization (header + CSV blocks).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# funlasso basis v1\n");
        let _ = writeln!(out, "kind = {}", self.kind.as_str());
        let _ = writeln!(out, "k = {}", self.dim());
        let _ = writeln!(out, "grid_len = {}", self.grid.len());
        let grid: Vec<String> = self.grid.iter().map(|v| format_f64(*v)).collect();
        let _ = writeln!(out, "grid = {}", grid.join(","));
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta.{k} = {v}");
        }
        for (name, m) in [
            ("gram", &self.gram),
            ("penalty", &self.penalty),
            ("eval", &self.eval),
        ] {
            let _ = writeln!(out, "[{name}]");
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format_f64(m[(r, c)])).collect();
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut k = None;
        let mut grid_len = None;
        let mut grid = Vec::new();
        let mut meta = Vec::new();
        let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                blocks.push((name.to_string(), Vec::new()));
                continue;
            }
            if let Some((_, rows)) = blocks.last_mut() {
                let row = line
                    .split(',')
                    .map(parse_f64)
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header line `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "kind" => kind = Some(BasisKind::parse(value)?),
                "k" => k = Some(parse_usize(value)?),
                "grid_len" => grid_len = Some(parse_usize(value)?),
                "grid" => {
                    if !value.is_empty() {
                        grid = value.split(',').map(parse_f64).collect::<Result<_>>()?;
                    }
                }
                _ => {
                    if let Some(mk) = key.strip_prefix("meta.") {
                        meta.push((mk.to_string(), value.to_string()));
                    }
                }
            }
        }
        let kind = kind.ok_or_else(|| Error::MissingKey("kind".into()))?;
        let k = k.ok_or_else(|| Error::MissingKey("k".into()))?;
        let grid_len = grid_len.ok_or_else(|| Error::MissingKey("grid_len".into()))?;
        if grid.len() != grid_len {
            return Err(Error::Parse(format!(
                "grid has {} points, header says {grid_len}",
                grid.len()
            )));
        }
        let block = |name: &str, rows: usize| -> Result<DMatrix<f64>> {
            let data = blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, d)| d)
                .ok_or_else(|| Error::MissingKey(format!("[{name}]")))?;
            if data.len() != rows || data.iter().any(|r| r.len() != k) {
                return Err(Error::Parse(format!("block [{name}] is not {rows}x{k}")));
            }
            Ok(DMatrix::from_fn(rows, k, |r, c| data[r][c]))
        };
        let gram = block("gram", k)?;
        let penalty = block("penalty", k)?;
        let eval = if grid_len == 0 {
            DMatrix::zeros(0, k)
        } else {
            block("eval", grid_len)?
        };
        let mut basis = Basis::new(kind, gram, penalty, grid, eval)?;
        basis.meta = meta;
        Ok(basis)
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Parse(format!("expected a count, got `{s}`")))
}

/// One element of the Hilbert space.
#[derive(Debug, Clone)]
pub struct FunctionalVector {
    pub coeffs: DVector<f64>,
    pub basis: Arc<Basis>,
}

impl FunctionalVector {
    pub fn new(coeffs: DVector<f64>, basis: Arc<Basis>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of dimension {}",
                coeffs.len(),
                basis.dim()
            )));
        }
        Ok(FunctionalVector { coeffs, basis })
    }

    pub fn zeros(basis: Arc<Basis>) -> Self {
        FunctionalVector {
            coeffs: DVector::zeros(basis.dim()),
            basis,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        FunctionalVector {
            coeffs: &self.coeffs * a,
            basis: self.basis.clone(),
        }
    }
}

fn same_basis(a: &Arc<Basis>, b: &Arc<Basis>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `x^T G y`.
pub fn inner(x: &FunctionalVector, y: &FunctionalVector) -> Result<f64> {
    if !same_basis(&x.basis, &y.basis) {
        return Err(Error::IncompatibleBases);
    }
    Ok(x.basis.inner_coeffs(x.coeffs.as_slice(), y.coeffs.as_slice()))
}

pub fn norm(x: &FunctionalVector) -> f64 {
    x.basis.norm_coeffs(x.coeffs.as_slice())
}

/// The full parameter: one functional coefficient per predictor (rows).
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    pub coeffs: DMatrix<f64>,
    pub basis: Arc<Basis>,
}

impl CoefficientMatrix {
    pub fn new(coeffs: DMatrix<f64>, basis: Arc<Basis>) -> Result<Self> {
        if coeffs.ncols() != basis.dim() {
            return Err(Error::Dimension(format!(
                "coefficient matrix has {} columns, basis has dimension {}",
                coeffs.ncols(),
                basis.dim()
            )));
        }
        Ok(CoefficientMatrix { coeffs, basis })
    }

    pub fn zeros(rows: usize, basis: Arc<Basis>) -> Self {
        CoefficientMatrix {
            coeffs: DMatrix::zeros(rows, basis.dim()),
            basis,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn row(&self, i: usize) -> FunctionalVector {
        FunctionalVector {
            coeffs: self.coeffs.row(i).transpose(),
            basis: self.basis.clone(),
        }
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        let r: RowDVector<f64> = self.coeffs.row(i).into_owned();
        self.basis.norm_coeffs(r.as_slice())
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row_norm(i)).collect()
    }

    /// Indices of rows with positive norm.
    pub fn support(&self) -> Vec<usize> {
        self.row_norms()
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `sum_i w_i ||beta_i||` over rows with finite weight. Rows with infinite
/// weight must be zero.
pub fn group_penalty(b: &CoefficientMatrix, weights: &[f64]) -> Result<f64> {
    if weights.len() != b.n_rows() {
        return Err(Error::Dimension(format!(
            "{} weights for {} rows",
            weights.len(),
            b.n_rows()
        )));
    }
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w.is_nan() || w < 0.0 {
            return Err(Error::InvalidInput(format!("weight {i} is {w}")));
        }
        let n = b.row_norm(i);
        if w.is_infinite() {
            if n > 0.0 {
                return Err(Error::ExcludedNonzero(i));
            }
            continue;
        }
        total += w * n;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag_basis(d: &[f64]) -> Arc<Basis> {
        let k = d.len();
        Arc::new(
            Basis::new(
                BasisKind::Bspline,
                DMatrix::from_diagonal(&DVector::from_column_slice(d)),
                DMatrix::zeros(k, k),
                vec![],
                DMatrix::zeros(0, k),
            )
            .unwrap(),
        )
    }

    fn fv(c: &[f64], b: &Arc<Basis>) -> FunctionalVector {
        FunctionalVector::new(DVector::from_column_slice(c), b.clone()).unwrap()
    }

    #[test]
    fn inner_examples() {
        let id = Arc::new(Basis::identity(2));
        assert_eq!(inner(&fv(&[0.0, 0.0], &id), &fv(&[0.0, 0.0], &id)).unwrap(), 0.0);
        assert_eq!(inner(&fv(&[1.0, 0.0], &id), &fv(&[1.0, 0.0], &id)).unwrap(), 1.0);
        let g = diag_basis(&[2.0, 1.0]);
        assert_eq!(inner(&fv(&[1.0, 1.0], &g), &fv(&[1.0, 1.0], &g)).unwrap(), 3.0);
    }

    #[test]
    fn inner_rejects_mixed_bases() {
        let id = Arc::new(Basis::identity(2));
        let g = diag_basis(&[2.0, 1.0]);
        let err = inner(&fv(&[1.0, 0.0], &id), &fv(&[1.0, 0.0], &g)).unwrap_err();
        assert_eq!(err.to_string(), "incompatible bases");
    }

    #[test]
    fn norm_examples() {
        let id = Arc::new(Basis::identity(2));
        assert_eq!(norm(&fv(&[0.0, 0.0], &id)), 0.0);
        assert_eq!(norm(&fv(&[3.0, 4.0], &id)), 5.0);
        let g = diag_basis(&[2.0, 1.0]);
        assert_relative_eq!(norm(&fv(&[1.0, 1.0], &g)), 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn group_penalty_examples() {
        let id = Arc::new(Basis::identity(2));
        let zero = CoefficientMatrix::zeros(3, id.clone());
        assert_eq!(group_penalty(&zero, &[1.0, 2.0, 3.0]).unwrap(), 0.0);

        let one = CoefficientMatrix::new(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), id.clone()).unwrap();
        assert_eq!(group_penalty(&one, &[1.0]).unwrap(), 5.0);

        let two = CoefficientMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            id.clone(),
        )
        .unwrap();
        assert_eq!(group_penalty(&two, &[2.0, 0.5]).unwrap(), 3.0);
    }

    #[test]
    fn group_penalty_infinite_weight() {
        let id = Arc::new(Basis::identity(2));
        let b = CoefficientMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            id,
        )
        .unwrap();
        assert_eq!(group_penalty(&b, &[1.0, f64::INFINITY]).unwrap(), 1.0);
        let err = group_penalty(&b, &[f64::INFINITY, 1.0]).unwrap_err();
        assert!(err.to_string().contains("excluded predictor has nonzero coefficient"));
    }

    #[test]
    fn rejects_asymmetric_and_indefinite_gram() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(Basis::new(BasisKind::Bspline, asym, DMatrix::zeros(2, 2), vec![], DMatrix::zeros(0, 2)).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Basis::new(BasisKind::Bspline, indef, DMatrix::zeros(2, 2), vec![], DMatrix::zeros(0, 2)),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let grid = vec![0.0, 0.5, 1.0];
        let b = Basis::raw_grid(grid).unwrap().with_meta("source", "test");
        let text = b.to_text();
        let back = Basis::from_text(&text).unwrap();
        assert_eq!(b, back);
        assert_eq!(back.meta("source"), Some("test"));
        assert_eq!(back.kind(), BasisKind::RawGrid);
    }

    fn spd_basis(k: usize, seed: &[f64]) -> Arc<Basis> {
        let a = DMatrix::from_fn(k, k, |r, c| seed[(r * k + c) % seed.len()]);
        let g = &a * a.transpose() + DMatrix::identity(k, k);
        let g = (&g + g.transpose()) * 0.5;
        Arc::new(Basis::new(BasisKind::Bspline, g, DMatrix::zeros(k, k), vec![], DMatrix::zeros(0, k)).unwrap())
    }

    proptest! {
        #[test]
        fn cauchy_schwarz_and_homogeneity(
            seed in proptest::collection::vec(-2.0f64..2.0, 9),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
            y in proptest::collection::vec(-5.0f64..5.0, 3),
            a in -10.0f64..10.0,
        ) {
            let b = spd_basis(3, &seed);
            let xv = fv(&x, &b);
            let yv = fv(&y, &b);
            let ip = inner(&xv, &yv).unwrap();
            prop_assert!(ip.abs() <= norm(&xv) * norm(&yv) * (1.0 + 1e-12) + 1e-12);
            let lhs = norm(&xv.scaled(a));
            prop_assert!((lhs - a.abs() * norm(&xv)).abs() <= 1e-10 * (1.0 + lhs));
            // Whitening maps G-norms to Euclidean norms.
            let w = b.whiten_rows(&DMatrix::from_row_slice(1, 3, &x));
            prop_assert!((w.norm() - norm(&xv)).abs() <= 1e-10 * (1.0 + w.norm()));
            let back = b.unwhiten_rows(&w);
            prop_assert!((back - DMatrix::from_row_slice(1, 3, &x)).amax() <= 1e-10);
        }

        #[test]
        fn triangle_inequality(
            seed in proptest::collection::vec(-2.0f64..2.0, 9),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
            y in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let b = spd_basis(3, &seed);
            let s: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
            prop_assert!(norm(&fv(&s, &b)) <= norm(&fv(&x, &b)) + norm(&fv(&y, &b)) + 1e-10);
        }

        #[test]
        fn fpc_inner_is_dot(x in proptest::collection::vec(-5.0f64..5.0, 4), y in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let id = Arc::new(Basis::identity(4));
            let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            prop_assert_eq!(inner(&fv(&x, &id), &fv(&y, &id)).unwrap(), dot);
        }

        #[test]
        fn unit_weight_penalty_is_sum_of_norms(rows in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let b = spd_basis(3, &[0.3, -0.2, 0.5, 0.1, 0.9, -0.4, 0.2, 0.0, 0.7]);
            let m = CoefficientMatrix::new(DMatrix::from_row_slice(4, 3, &rows), b).unwrap();
            let total: f64 = m.row_norms().iter().sum();
            let p = group_penalty(&m, &[1.0; 4]).unwrap();
            prop_assert!((p - total).abs() <= 1e-12 * (1.0 + total));
        }
    }
}
