//! Diffusion MRI signal models that plug into the Bayesian engine.
//!
//! DTI is fitted by weighted least squares on the log signal; constrained
//! spherical deconvolution (CSD) on a single shell. Derived quantities
//! (MD, FA, RTOP, fODF peaks and crossing angles) are computed either in
//! closed form through an affine pushforward or by sampling the coefficient
//! posterior.

mod csd;
mod dti;
mod peaks;
mod scheme;
mod sh;
mod sphere;
mod tensor;

pub use csd::{convolve, csd_fit, gauss_legendre, response_from_tensor, CsdModel, CsdParams, Response, ShFit};
pub use dti::{
    dti_design, dti_fit_wls, fa_posterior_samples, md_functional, md_posterior, rtop_posterior_samples, DtiFit,
    FaSamples, RtopSamples, Weighting, DTI_COEFFS,
};
pub use peaks::{
    angle_posterior_samples, crossing_angle, detect_peaks, AngleSamples, FodfPeaks, Peak, PeakFinder, PeakParams,
};
pub use scheme::{AcquisitionScheme, Measurement, PulseTiming, SHELL_TOLERANCE};
pub use sh::{sh_basis, sh_count, sh_degrees, sh_index};
pub use sphere::{fibonacci_hemisphere, fibonacci_sphere, icosphere, SphereGrid};
pub use tensor::{fa_of_tensor, rotate_about_y, rtop_of_tensor, DiffusionTensor};
