use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};
use crate::funspace::{Basis, BasisKind};
use crate::linalg::sym_eigen_desc;

/// Principal components of a sample of functions expressed in a basis with
/// Gram matrix `G`.
#[derive(Debug, Clone)]
pub struct FpcaResult {
    /// Retained eigenfunctions as rows of source-basis coefficients; rows are
    /// orthonormal under the source Gram matrix.
    pub components: DMatrix<f64>,
    /// All eigenvalues, nonincreasing, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// Cumulative explained-variance fractions, one per eigenvalue.
    pub variance_explained: Vec<f64>,
    pub mean_coeffs: RowDVector<f64>,
    /// `G` times the transposed components: maps centered coefficients to scores.
    projector: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FpcaOutput {
    pub result: FpcaResult,
    /// Scores of the centered input (rows = subjects).
    pub scores: DMatrix<f64>,
    /// Orthonormal basis of the retained components.
    pub basis: Basis,
}

impl FpcaResult {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Scores of new curves given in source-basis coefficients.
    pub fn project(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = coeffs.clone();
        for mut r in centered.row_iter_mut() {
            r -= &self.mean_coeffs;
        }
        centered * &self.projector
    }

    /// Scores without removing the mean, for coefficient functions.
    pub fn rotate(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        coeffs * &self.projector
    }

    /// Source-basis coefficients of functions given by scores (no mean added).
    pub fn back_project(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        scores * &self.components
    }

    /// Source-basis coefficients of curves given by scores, mean added.
    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.back_project(scores);
        for mut r in c.row_iter_mut() {
            r += &self.mean_coeffs;
        }
        c
    }
}

/// Functional PCA of `coeffs` (one row per subject) under `basis`'s Gram
/// matrix, keeping the fewest components whose cumulative variance reaches
/// `target_variance` (all components when it is 1).
pub fn fpca(coeffs: &DMatrix<f64>, basis: &Basis, target_variance: f64) -> Result<FpcaOutput> {
    let (n, k) = coeffs.shape();
    if n < 2 {
        return Err(Error::InvalidInput("fpca needs at least 2 curves".into()));
    }
    if !(target_variance > 0.0 && target_variance <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "target variance {target_variance} is outside (0, 1]"
        )));
    }
    if k != basis.dim() {
        return Err(Error::Dimension(format!(
            "{k} coefficients per curve, basis has {}",
            basis.dim()
        )));
    }
    let mean = coeffs.row_mean();
    let mut centered = coeffs.clone();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let l = basis.gram_factor();
    // Whitened data: rows c L have Euclidean geometry.
    let white = &centered * l;
    let cov = white.transpose() * &white / (n as f64 - 1.0);
    let (vals, vecs) = sym_eigen_desc(&cov);
    let eigenvalues: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    let variance_explained: Vec<f64> = eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            if total > 0.0 {
                acc / total
            } else {
                1.0
            }
        })
        .collect();
    let keep = if target_variance >= 1.0 {
        k
    } else {
        variance_explained
            .iter()
            .position(|&c| c >= target_variance * (1.0 - 1e-12))
            .map_or(k, |p| p + 1)
    };
    let q = vecs.columns(0, keep).into_owned();
    // psi_j = L^{-T} q_j, stored as rows: Psi = Q^T L^{-1}.
    let lt = l.transpose();
    let psi_t = lt
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::NotPositiveDefinite("gram factor".into()))?;
    let components = psi_t.transpose();
    let projector = l * &q;
    let scores = &white * &q;

    let eval = basis.eval_matrix() * &psi_t;
    let penalty = &components * basis.penalty() * &psi_t;
    let penalty = (&penalty + penalty.transpose()) * 0.5;
    let fpc_basis = Basis::new(
        BasisKind::Fpc,
        DMatrix::identity(keep, keep),
        penalty,
        basis.grid().to_vec(),
        eval,
    )?
    .with_meta("source_kind", basis.kind().as_str())
    .with_meta("source_dim", k)
    .with_meta("variance_explained", variance_explained[keep - 1]);

    Ok(FpcaOutput {
        result: FpcaResult {
            components,
            eigenvalues,
            variance_explained,
            mean_coeffs: mean,
            projector,
        },
        scores,
        basis: fpc_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::{build_bspline_basis, SmoothingConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn basis(k: usize) -> Basis {
        let grid: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        build_bspline_basis(&grid, &SmoothingConfig { n_basis: k, ..Default::default() }).unwrap()
    }

    fn random(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng))
    }

    #[test]
    fn rank_one_sample() {
        let b = basis(8);
        let dir = random(1, 8, 1);
        let amp = random(30, 1, 2);
        let data = &amp * &dir;
        let out = fpca(&data, &b, 0.95).unwrap();
        assert_eq!(out.result.n_components(), 1);
        assert!(out.result.variance_explained[0] >= 0.95);
    }

    #[test]
    fn full_rotation_round_trip_and_norms() {
        let b = basis(10);
        let data = random(50, 10, 5);
        let out = fpca(&data, &b, 1.0).unwrap();
        assert_eq!(out.result.n_components(), 10);
        let back = out.result.reconstruct(&out.scores);
        assert!((&back - &data).amax() < 1e-8);
        let mean = data.row_mean();
        for n in 0..50 {
            let c: Vec<f64> = (data.row(n) - &mean).iter().copied().collect();
            let gnorm = b.norm_coeffs(&c);
            assert!((gnorm - out.scores.row(n).norm()).abs() < 1e-8);
        }
        // Components orthonormal under G.
        let ortho = &out.result.components * b.gram() * out.result.components.transpose();
        assert!((ortho - DMatrix::<f64>::identity(10, 10)).amax() < 1e-9);
    }

    #[test]
    fn scores_are_uncorrelated() {
        let b = basis(12);
        let data = random(80, 12, 9);
        let out = fpca(&data, &b, 0.99).unwrap();
        let s = &out.scores;
        let cov = s.transpose() * s;
        for i in 0..cov.nrows() {
            for j in 0..cov.ncols() {
                if i != j {
                    assert!(cov[(i, j)].abs() <= 1e-8 * cov[(i, i)].max(cov[(j, j)]));
                }
            }
        }
        let ve = &out.result.variance_explained;
        assert!(ve.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert!(ve[out.result.n_components() - 1] >= 0.99);
        assert!(out.result.eigenvalues.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn project_matches_scores() {
        let b = basis(9);
        let data = random(25, 9, 21);
        let out = fpca(&data, &b, 0.9).unwrap();
        assert!((out.result.project(&data) - &out.scores).amax() < 1e-10);
    }

    #[test]
    fn argument_errors() {
        let b = basis(6);
        assert!(fpca(&random(1, 6, 1), &b, 0.9).is_err());
        assert!(fpca(&random(5, 6, 1), &b, 0.0).is_err());
        assert!(fpca(&random(5, 6, 1), &b, 1.1).is_err());
    }
}
