use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{residual_cov_diag, LinearSolver, LinearSystem, PosteriorT};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Domain};

pub const DEFAULT_BOOTSTRAP_DRAWS: usize = 1000;

/// Residuals scaled to unit variance under the fitted noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedResiduals {
    /// `r_i / √(ZZᵀ)_ii`; zero where excluded.
    pub values: DVector<f64>,
    /// Measurements whose `(ZZᵀ)_ii` vanished (leverage one).
    pub excluded: Vec<usize>,
}

impl NormalizedResiduals {
    /// The resampling pool: values of the included measurements.
    pub fn pool(&self) -> Vec<f64> {
        (0..self.values.len()).filter(|i| !self.excluded.contains(i)).map(|i| self.values[i]).collect()
    }
}

/// `r̃ᵢ = rᵢ/√(ZZᵀ)ᵢᵢ` with `Z = (I−H)W^{-1/2}`. For `Λ = 0` and diagonal
/// `W` this is `rᵢ/√((1−Hᵢᵢ)/Wᵢᵢ)`.
pub fn normalized_residuals(sys: &LinearSystem, fit: &PosteriorT) -> Result<NormalizedResiduals> {
    let diag = residual_cov_diag(sys, fit)?;
    let r = sys.observations() - sys.design() * fit.mean();
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut excluded = Vec::new();
    let values = DVector::from_fn(r.len(), |i, _| {
        if diag[i] > 1e-12 * scale && diag[i] > 0.0 {
            r[i] / diag[i].sqrt()
        } else {
            excluded.push(i);
            0.0
        }
    });
    Ok(NormalizedResiduals { values, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult<T> {
    /// Statistic of each successful draw.
    pub samples: Vec<T>,
    pub n_draws: usize,
    /// Draws whose statistic could not be evaluated.
    pub failures: usize,
    /// Measurements left out of the resampling pool.
    pub excluded: usize,
}

impl<T> BootstrapResult<T> {
    /// More than 5% of draws failed.
    pub fn is_flagged(&self) -> bool {
        20 * self.failures > self.n_draws
    }
}

/// Residual bootstrap: resample normalised residuals with replacement,
/// rebuild `y* = ŷ + W^{-1/2} r̃*`, refit the same system and evaluate
/// `statistic` on the refit coefficients. `None` from the statistic counts
/// as a failed draw.
pub fn residual_bootstrap<T, F>(
    sys: &LinearSystem,
    fit: &PosteriorT,
    statistic: F,
    n_draws: usize,
    seed: u64,
) -> Result<BootstrapResult<T>>
where
    T: Send,
    F: Fn(&DVector<f64>) -> Option<T> + Sync + Send,
{
    if n_draws == 0 {
        return Err(Error::InvalidInput("n_draws must be positive".into()));
    }
    let solver = LinearSolver::new(sys)?;
    let res = normalized_residuals(sys, fit)?;
    let pool = res.pool();
    if pool.is_empty() {
        return Err(Error::InvalidInput("no residual can be resampled".into()));
    }
    let fitted = sys.design() * fit.mean();
    let n = sys.n();
    let draws = par::map_indexed(n_draws, |i| {
        let mut rng = rng::stream(seed, Domain::Bootstrap, i as u64);
        let r = DVector::from_fn(n, |_, _| pool[rng.random_range(0..pool.len())]);
        let y = &fitted + sys.apply_inverse_sqrt_precision(&r);
        let c = solver.mean_for(&y);
        if c.iter().all(|v| v.is_finite()) {
            statistic(&c)
        } else {
            None
        }
    });
    let samples: Vec<T> = draws.into_iter().flatten().collect();
    Ok(BootstrapResult { failures: n_draws - samples.len(), samples, n_draws, excluded: res.excluded.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{fit_posterior, smoother_matrix, Precision};
    use crate::rng::{stream, Domain};
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn constant_system() -> LinearSystem {
        LinearSystem::ordinary(DMatrix::from_element(5, 1, 1.0), DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]))
            .unwrap()
    }

    #[test]
    fn ols_reduces_to_studentized_residuals() {
        let mut rng = stream(1, Domain::Synthetic, 0);
        let x = DMatrix::from_fn(12, 3, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(12, |_, _| StandardNormal.sample(&mut rng));
        let sys = LinearSystem::ordinary(x, y.clone()).unwrap();
        let fit = fit_posterior(&sys).unwrap();
        let h = smoother_matrix(&sys, &fit).unwrap();
        let r = &y - sys.design() * fit.mean();
        let nr = normalized_residuals(&sys, &fit).unwrap();
        for i in 0..12 {
            assert!((nr.values[i] - r[i] / (1.0 - h[(i, i)]).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_weights_reduce_to_leverage_form() {
        let mut rng = stream(2, Domain::Synthetic, 0);
        let x = DMatrix::from_fn(15, 4, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(15, |_, _| StandardNormal.sample(&mut rng));
        let w = DVector::from_fn(15, |i, _| 0.5 + i as f64);
        let sys = LinearSystem::weighted(x, w.clone(), y.clone()).unwrap();
        let fit = fit_posterior(&sys).unwrap();
        let h = smoother_matrix(&sys, &fit).unwrap();
        let r = &y - sys.design() * fit.mean();
        let nr = normalized_residuals(&sys, &fit).unwrap();
        for i in 0..15 {
            assert!((nr.values[i] - r[i] / ((1.0 - h[(i, i)]) / w[i]).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn normalized_variance_matches_sigma2() {
        let n = 10_000;
        let mut rng = stream(3, Domain::Synthetic, 0);
        let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { ((i * (j + 3)) % 17) as f64 / 17.0 });
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[(i, 1)] * 2.0 + 0.7 * e
        });
        let sys = LinearSystem::ordinary(x, y).unwrap();
        let fit = fit_posterior(&sys).unwrap();
        let nr = normalized_residuals(&sys, &fit).unwrap();
        let v = nr.values.iter().map(|r| r * r).sum::<f64>() / n as f64;
        assert!((v / fit.sigma2_hat() - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_residuals() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(6, |i, _| 1.0 + 2.0 * i as f64);
        let sys = LinearSystem::ordinary(x, y).unwrap();
        let fit = fit_posterior(&sys).unwrap();
        let nr = normalized_residuals(&sys, &fit).unwrap();
        assert!(nr.values.iter().all(|v| v.abs() < 1e-12));
        let b = residual_bootstrap(&sys, &fit, |c| Some(c.clone()), 20, 1).unwrap();
        for c in &b.samples {
            assert!((c - fit.mean()).norm() < 1e-10);
        }
    }

    #[test]
    fn bootstrap_of_the_mean() {
        let sys = constant_system();
        let fit = fit_posterior(&sys).unwrap();
        let b = residual_bootstrap(&sys, &fit, |c| Some(c[0]), 4000, 7).unwrap();
        assert_eq!(b.failures, 0);
        let m = b.samples.iter().sum::<f64>() / b.samples.len() as f64;
        let sd = (b.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b.samples.len() - 1) as f64).sqrt();
        assert!((m - 3.0).abs() < 3.0 * sd / (b.samples.len() as f64).sqrt());
    }

    #[test]
    fn failures_are_counted() {
        let sys = constant_system();
        let fit = fit_posterior(&sys).unwrap();
        let b = residual_bootstrap(&sys, &fit, |c| if c[0] > 3.0 { Some(c[0]) } else { None }, 200, 1).unwrap();
        assert!(b.failures > 10 && b.is_flagged());
        assert_eq!(b.samples.len() + b.failures, 200);
    }

    #[test]
    fn full_precision_reconstruction() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let mut w = DMatrix::identity(6, 6) * 2.0;
        for i in 0..5 {
            w[(i, i + 1)] = 0.5;
            w[(i + 1, i)] = 0.5;
        }
        let y = DVector::from_vec(vec![0.1, 1.2, 1.9, 3.2, 3.8, 5.1]);
        let sys = LinearSystem::new(x, Precision::Full(w), DMatrix::zeros(2, 2), y).unwrap();
        let fit = fit_posterior(&sys).unwrap();
        let b = residual_bootstrap(&sys, &fit, |c| Some(c[1]), 500, 2).unwrap();
        let m = b.samples.iter().sum::<f64>() / 500.0;
        assert!((m - fit.mean()[1]).abs() < 0.05);
    }
}
