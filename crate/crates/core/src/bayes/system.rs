use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::linalg::{eig_range, is_symmetric, PSD_REL_TOL};
use crate::error::{Error, Result};

/// Noise-precision structure `W`, known up to the scale `σ²`.
#[derive(Debug, Clone)]
pub enum Precision {
    /// Independent, heteroscedastic noise.
    Diagonal(DVector<f64>),
    /// Correlated noise; must be symmetric positive definite.
    Full(DMatrix<f64>),
}

impl Precision {
    pub fn identity(n: usize) -> Self {
        Precision::Diagonal(DVector::from_element(n, 1.0))
    }

    pub fn len(&self) -> usize {
        match self {
            Precision::Diagonal(w) => w.len(),
            Precision::Full(w) => w.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trace(&self) -> f64 {
        match self {
            Precision::Diagonal(w) => w.sum(),
            Precision::Full(w) => w.trace(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            Precision::Diagonal(w) => Precision::Diagonal(w * alpha),
            Precision::Full(w) => Precision::Full(w * alpha),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Precision::Diagonal(w) => DMatrix::from_diagonal(w),
            Precision::Full(w) => w.clone(),
        }
    }
}

/// A weighted, regularised linear least-squares problem.
///
/// Observations follow `y = Φc + ε`, `ε ~ N(0, σ²W⁻¹)`, with Gaussian prior
/// precision `Λ/σ²` on the coefficients.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    design: DMatrix<f64>,
    precision: Precision,
    regularizer: DMatrix<f64>,
    observations: DVector<f64>,
    /// Cholesky factor of a full `W`.
    w_chol: Option<Cholesky<f64, Dyn>>,
}

impl LinearSystem {
    pub fn new(
        design: DMatrix<f64>,
        precision: Precision,
        regularizer: DMatrix<f64>,
        observations: DVector<f64>,
    ) -> Result<Self> {
        let (n, d) = design.shape();
        if n == 0 || d == 0 {
            return Err(Error::Dimension(format!("design must be non-empty, got {n}x{d}")));
        }
        if observations.len() != n {
            return Err(Error::Dimension(format!("{} observations for a design with {n} rows", observations.len())));
        }
        if precision.len() != n {
            return Err(Error::Dimension(format!("precision of size {} for {n} observations", precision.len())));
        }
        if regularizer.shape() != (d, d) {
            return Err(Error::Dimension(format!("regularizer is {:?}, expected {d}x{d}", regularizer.shape())));
        }
        if design.iter().chain(observations.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design and observations must be finite".into()));
        }
        let w_chol = match &precision {
            Precision::Diagonal(w) => {
                if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidInput(format!(
                        "diagonal precision entries must be positive, found {bad}"
                    )));
                }
                None
            }
            Precision::Full(w) => {
                if !is_symmetric(w) {
                    return Err(Error::InvalidInput("full precision matrix is not symmetric".into()));
                }
                Some(
                    Cholesky::new(w.clone())
                        .ok_or_else(|| Error::InvalidInput("full precision matrix is not positive definite".into()))?,
                )
            }
        };
        if !is_symmetric(&regularizer) {
            return Err(Error::InvalidInput("regularizer is not symmetric".into()));
        }
        if regularizer.iter().any(|v| *v != 0.0) {
            let (min, max) = eig_range(&regularizer);
            if min < -PSD_REL_TOL * max.max(0.0) {
                return Err(Error::NotPositiveSemiDefinite { min_eig: min });
            }
        }
        Ok(LinearSystem { design, precision, regularizer, observations, w_chol })
    }

    /// Ordinary least squares: `W = I`, `Λ = 0`.
    pub fn ordinary(design: DMatrix<f64>, observations: DVector<f64>) -> Result<Self> {
        let (n, d) = design.shape();
        Self::new(design, Precision::identity(n), DMatrix::zeros(d, d), observations)
    }

    /// Weighted least squares with diagonal `W`, `Λ = 0`.
    pub fn weighted(design: DMatrix<f64>, weights: DVector<f64>, observations: DVector<f64>) -> Result<Self> {
        let d = design.ncols();
        Self::new(design, Precision::Diagonal(weights), DMatrix::zeros(d, d), observations)
    }

    /// Same design, precision and regularizer with new observations.
    pub fn with_observations(&self, observations: DVector<f64>) -> Result<Self> {
        if observations.len() != self.n() {
            return Err(Error::Dimension(format!(
                "{} observations for a design with {} rows",
                observations.len(),
                self.n()
            )));
        }
        Ok(LinearSystem { observations, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn precision(&self) -> &Precision {
        &self.precision
    }

    pub fn regularizer(&self) -> &DMatrix<f64> {
        &self.regularizer
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.observations
    }

    pub fn has_regularizer(&self) -> bool {
        self.regularizer.iter().any(|v| *v != 0.0)
    }

    /// `W v`.
    pub fn apply_precision(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.precision {
            Precision::Diagonal(w) => w.component_mul(v),
            Precision::Full(w) => w * v,
        }
    }

    /// `W M` for a matrix with `n` rows.
    pub(crate) fn apply_precision_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.precision {
            Precision::Diagonal(w) => {
                let mut out = m.clone();
                for (i, wi) in w.iter().enumerate() {
                    out.row_mut(i).scale_mut(*wi);
                }
                out
            }
            Precision::Full(w) => w * m,
        }
    }

    /// `tr(W⁻¹)`.
    pub(crate) fn trace_inverse_precision(&self) -> f64 {
        match (&self.precision, &self.w_chol) {
            (Precision::Diagonal(w), _) => w.iter().map(|v| 1.0 / v).sum(),
            (Precision::Full(_), Some(ch)) => ch.inverse().trace(),
            (Precision::Full(_), None) => unreachable!("full precision is always factored"),
        }
    }

    /// Diagonal of `W⁻¹`.
    pub(crate) fn inverse_precision_diag(&self) -> DVector<f64> {
        match (&self.precision, &self.w_chol) {
            (Precision::Diagonal(w), _) => w.map(|v| 1.0 / v),
            (Precision::Full(_), Some(ch)) => ch.inverse().diagonal(),
            (Precision::Full(_), None) => unreachable!("full precision is always factored"),
        }
    }

    /// The square root `W^{-1/2}` taken from the Cholesky factor: with
    /// `W = LLᵀ` this is `L⁻ᵀ`, so that `W^{-1/2} (W^{-1/2})ᵀ = W⁻¹`.
    pub fn inverse_sqrt_precision(&self) -> DMatrix<f64> {
        match (&self.precision, &self.w_chol) {
            (Precision::Diagonal(w), _) => DMatrix::from_diagonal(&w.map(|v| 1.0 / v.sqrt())),
            (Precision::Full(_), Some(ch)) => {
                let l = ch.l();
                let n = l.nrows();
                let linv = l
                    .solve_lower_triangular(&DMatrix::identity(n, n))
                    .expect("Cholesky factor has a positive diagonal");
                linv.transpose()
            }
            (Precision::Full(_), None) => unreachable!("full precision is always factored"),
        }
    }

    /// `W^{-1/2} v` without forming the matrix for diagonal `W`.
    pub fn apply_inverse_sqrt_precision(&self, v: &DVector<f64>) -> DVector<f64> {
        match (&self.precision, &self.w_chol) {
            (Precision::Diagonal(w), _) => v.zip_map(w, |vi, wi| vi / wi.sqrt()),
            (Precision::Full(_), Some(ch)) => {
                ch.l().transpose().solve_upper_triangular(v).expect("Cholesky factor has a positive diagonal")
            }
            (Precision::Full(_), None) => unreachable!("full precision is always factored"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(LinearSystem::ordinary(ones(3), y), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_nonpositive_weights() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let w = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        assert!(matches!(LinearSystem::weighted(ones(3), w, y), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_indefinite_full_precision() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = LinearSystem::new(ones(2), Precision::Full(w), DMatrix::zeros(1, 1), y);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_negative_regularizer() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let lam = DMatrix::from_element(1, 1, -1.0);
        let r = LinearSystem::new(ones(3), Precision::identity(3), lam, y);
        assert!(matches!(r, Err(Error::NotPositiveSemiDefinite { .. })));
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let w = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let sys = LinearSystem::new(
            ones(3),
            Precision::Full(w.clone()),
            DMatrix::zeros(1, 1),
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
        )
        .unwrap();
        let s = sys.inverse_sqrt_precision();
        let winv = w.try_inverse().unwrap();
        assert!((&s * s.transpose() - winv).amax() < 1e-12);
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert!((&s * &v - sys.apply_inverse_sqrt_precision(&v)).amax() < 1e-12);
    }
}
