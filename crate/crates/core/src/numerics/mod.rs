//! Special functions, quadrature, random streams and small dense linear
//! algebra shared by the rest of the crate.

pub mod linalg;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use linalg::{min_eigenvalue, solve_spd, Matrix};
pub use quadrature::{integrate, QuadratureRule, RuleKind};
pub use rng::RngStream;
pub use special::{chisq_quantile, noncentral_chisq_sf, normal_cdf, normal_quantile};
