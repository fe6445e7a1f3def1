//! Robust estimation and Wald-type inference for linear regression models
//! with fixed design, based on the minimum Rényi-pseudodistance estimator.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod robustness;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{fit_mle, fit_rp, FitResult, SolverOptions};
pub use model::{Alpha, DensityFamily, ModelData, NormalLinear, Theta};
