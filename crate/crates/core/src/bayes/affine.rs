use nalgebra::{DMatrix, DVector};

use super::posterior::PosteriorT;
use super::tdist::UnivariateT;
use crate::error::{Error, Result};

/// `θ = A c + b`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(Error::Dimension(format!(
                "map has {} rows but offset of length {}",
                matrix.nrows(),
                offset.len()
            )));
        }
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Dimension("affine map must be non-empty".into()));
        }
        Ok(AffineMap { matrix, offset })
    }

    /// A single linear functional `aᵀc + b`.
    pub fn functional(row: &[f64], offset: f64) -> Self {
        AffineMap { matrix: DMatrix::from_row_slice(1, row.len(), row), offset: DVector::from_element(1, offset) }
    }

    pub fn identity(d: usize) -> Self {
        AffineMap { matrix: DMatrix::identity(d, d), offset: DVector::zeros(d) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn apply(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.matrix * c + &self.offset
    }
}

/// The multivariate t family is closed under affine maps:
/// `Ac + b ~ t_ν(Aμ + b, ARAᵀ)`.
pub fn pushforward_affine(post: &PosteriorT, map: &AffineMap) -> Result<PosteriorT> {
    if map.matrix.ncols() != post.dim() {
        return Err(Error::Dimension(format!(
            "map expects {} coefficients, posterior has {}",
            map.matrix.ncols(),
            post.dim()
        )));
    }
    let mean = map.apply(post.mean());
    let scale = &map.matrix * post.scale() * map.matrix.transpose();
    let scale = (&scale + scale.transpose()) * 0.5;
    Ok(PosteriorT::from_pushforward(mean, post.dof(), post.sigma2_hat(), scale))
}

/// Marginal of coefficient `index`.
pub fn marginal(post: &PosteriorT, index: usize) -> Result<UnivariateT> {
    if index >= post.dim() {
        return Err(Error::Dimension(format!("index {index} out of range for dimension {}", post.dim())));
    }
    UnivariateT::new(post.mean()[index], post.scale()[(index, index)].max(0.0).sqrt(), post.dof())
}

impl PosteriorT {
    /// Views a one-dimensional posterior as a univariate t.
    pub fn to_univariate(&self) -> Result<UnivariateT> {
        if self.dim() != 1 {
            return Err(Error::Dimension(format!("expected a 1-d posterior, got {}", self.dim())));
        }
        marginal(self, 0)
    }
}
