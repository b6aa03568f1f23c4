//! Nonconcave penalized likelihood for Gaussian linear models.
//!
//! * [`penalty`]: SCAD, hard, L1 and Lq penalties and their thresholding rules.
//! * [`model`]: data container, Gaussian log-likelihood, spline bases.
//! * [`optimizer`]: penalized, oracle and linearly constrained fits.
//! * [`inference`]: sandwich covariance and penalized likelihood-ratio tests.
//! * [`tuning`]: GCV selection of `λ`.
//! * [`sim`]: the autoregressive Monte Carlo study.

pub mod error;
pub mod format;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod parallel;
pub mod penalty;
pub mod sim;
pub mod tuning;

pub use error::{Error, Result};
pub use model::{Dataset, GaussianModel, SplineSpec};
pub use optimizer::{FitConfig, FitResult, Init};
pub use penalty::{PenaltyKind, PenaltySpec};
