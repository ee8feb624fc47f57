//! Bayesian uncertainty quantification for linear least-squares models of
//! the diffusion MRI signal.
//!
//! Any fit of the form `c = (ΦᵀWΦ + Λ)⁻¹ΦᵀWy` is read as the mean of a
//! multivariate t posterior over the coefficients. The [`bayes`] module holds
//! the generic engine, [`dmri`] the tensor and spherical-deconvolution
//! plug-ins, [`phantom`] the simulation side, [`calibrate`] the P-P and
//! bootstrap machinery and [`group`] the voxelwise group comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod calibrate;
pub mod dmri;
pub mod error;
pub mod experiment;
pub mod group;
pub mod par;
pub mod phantom;
pub mod rng;

pub use error::{Error, Result};
