use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for the positive semi-definite checks.
pub(crate) const PSD_REL_TOL: f64 = 1e-10;

/// Ratio of extreme eigenvalues of a symmetric matrix; `inf` when the
/// smallest eigenvalue is not positive.
pub fn symmetric_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// A factor `L` with `L Lᵀ = m` for a symmetric positive semi-definite `m`.
///
/// Uses the eigendecomposition so that singular (e.g. point-mass) scale
/// matrices factor without special cases. Eigenvalues down to
/// `-1e-10·λ_max` are treated as zero.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 || !m.is_square() {
        return Err(Error::Dimension("psd_factor needs a non-empty square matrix".into()));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_REL_TOL * max {
        return Err(Error::NotPositiveSemiDefinite { min_eig: min });
    }
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = psd_factor(&m).unwrap();
        assert!((&l * l.transpose() - &m).amax() < 1e-12);
    }

    #[test]
    fn factor_of_rank_one() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let l = psd_factor(&m).unwrap();
        assert!((&l * l.transpose() - &m).amax() < 1e-12);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(psd_factor(&m), Err(Error::NotPositiveSemiDefinite { .. })));
    }

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 10.0, 100.0]));
        assert!((symmetric_condition(&m) - 100.0).abs() < 1e-10);
    }
}
