//! Checks of posterior calibration: quantiles, P-P curves and the residual
//! bootstrap used as a frequentist comparator.

mod bootstrap;
mod pp;
mod quantity;

pub use bootstrap::{
    normalized_residuals, residual_bootstrap, BootstrapResult, NormalizedResiduals, DEFAULT_BOOTSTRAP_DRAWS,
};
pub use pp::{bias_corrected_pp, default_p_grid, pp_curve, pp_curve_per_trial, PPCurve};
pub use quantity::{iqr, quantile, QuantityPosterior};
