//! Generic Bayesian linear regression engine.
//!
//! A weighted, regularised least-squares problem is described by a
//! [`LinearSystem`]; [`fit_posterior`] turns it into a [`PosteriorT`], the
//! multivariate t posterior obtained by marginalising an inverse-Gamma prior
//! on the noise scale with its hyperparameters chosen so that the posterior
//! covariance equals `σ̂²Q⁻¹`.

mod affine;
mod linalg;
mod posterior;
mod sample;
mod system;
mod tdist;

pub use affine::{marginal, pushforward_affine, AffineMap};
pub use linalg::{psd_factor, symmetric_condition};
pub use posterior::{
    fit_posterior, residual_cov_diag, residual_factor, smoother_matrix, LinearSolver, PosteriorRecord, PosteriorT,
};
pub use sample::{sample_posterior, sample_posterior_with};
pub use system::{LinearSystem, Precision};
pub use tdist::{t_quantile, UnivariateT};
