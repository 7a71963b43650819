//! Joint estimation of a sparse multivariate regression coefficient matrix
//! and the conditional dependency network among the responses.
//!
//! Each response is regressed on the covariates plus the residualized other
//! responses with an adaptive (weighted) Lasso; the coefficients on the
//! other responses recover the sparsity pattern of the response precision
//! matrix. The crate bundles the solver, a separate-estimation baseline,
//! BIC grid tuning, a seeded simulation generator, performance metrics, and
//! a replicated benchmark harness behind the `mcreg` CLI.

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod mcr;
pub mod metrics;
pub mod simgen;
pub mod tuning;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use linalg::DenseMatrix;
