//! Sparse regression of functional outcomes on scalar predictors.
//!
//! The crate implements the function-on-scalar lasso (FSL) and its adaptive
//! variant (AFSL), fitted by ADMM on a group-lasso reformulation, together
//! with the pieces needed to run simulation studies around them:
//!
//! * [`funspace`]: Hilbert-space elements in coefficient form (basis, Gram, norms).
//! * [`prep`]: penalized B-spline smoothing with GCV and functional PCA.
//! * [`simgen`]: Matérn Gaussian-process draws and AR(1) designs.
//! * [`solver`]: ADMM fits, KKT checks, orthogonal closed form, oracle estimator.
//! * [`tuning`]: warm-started lambda paths with BIC / EBIC selection.
//! * [`bench`]: replication campaigns, prediction error and design diagnostics.

pub mod bench;
pub mod error;
pub mod funspace;
pub mod io;
pub mod linalg;
pub mod plot;
pub mod prep;
pub mod simgen;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use funspace::{Basis, BasisKind, CoefficientMatrix, FunctionalVector};
pub use solver::{FitConfig, FitResult, KktReport};
