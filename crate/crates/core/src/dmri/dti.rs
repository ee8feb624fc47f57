use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::scheme::AcquisitionScheme;
use super::tensor::{fa_squared_unclamped, rtop_of_tensor, DiffusionTensor};
use crate::bayes::{
    fit_posterior, pushforward_affine, sample_posterior_with, AffineMap, LinearSystem, PosteriorT, UnivariateT,
};
use crate::error::{Error, Result};

/// Coefficient order: `ln S₀, Dxx, Dyy, Dzz, Dxy, Dxz, Dyz`.
pub const DTI_COEFFS: usize = 7;

/// Log-linear model: row `j` is
/// `[1, −b gx², −b gy², −b gz², −2b gx gy, −2b gx gz, −2b gy gz]`, so
/// `(Φc)_j = ln S₀ − b gᵀDg`.
pub fn dti_design(scheme: &AcquisitionScheme) -> DMatrix<f64> {
    let m = scheme.measurements();
    DMatrix::from_fn(m.len(), DTI_COEFFS, |j, k| {
        let b = m[j].bval;
        let g = m[j].direction;
        match k {
            0 => 1.0,
            1 => -b * g.x * g.x,
            2 => -b * g.y * g.y,
            3 => -b * g.z * g.z,
            4 => -2.0 * b * g.x * g.y,
            5 => -2.0 * b * g.x * g.z,
            _ => -2.0 * b * g.y * g.z,
        }
    })
}

/// Source of the `diag(S²)` weights of the log-signal fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Squared signal predicted by an unweighted prefit.
    #[default]
    Fitted,
    /// Squared observed signal.
    Observed,
}

#[derive(Debug, Clone)]
pub struct DtiFit {
    pub posterior: PosteriorT,
    pub system: LinearSystem,
    pub scheme: AcquisitionScheme,
}

impl DtiFit {
    pub fn tensor(&self) -> DiffusionTensor {
        tensor_from_coefficients(self.posterior.mean())
    }
}

pub(crate) fn tensor_from_coefficients(c: &DVector<f64>) -> DiffusionTensor {
    DiffusionTensor { xx: c[1], yy: c[2], zz: c[3], xy: c[4], xz: c[5], yz: c[6] }
}

/// Weighted least-squares DTI fit of `ln S` with `W = diag(S²)`.
pub fn dti_fit_wls(scheme: &AcquisitionScheme, signal: &[f64], weighting: Weighting) -> Result<DtiFit> {
    if signal.len() != scheme.len() {
        return Err(Error::Dimension(format!("{} signal values for {} measurements", signal.len(), scheme.len())));
    }
    if let Some((i, s)) = signal.iter().enumerate().find(|(_, s)| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::Rejected(format!("signal {s} at measurement {i} is not positive")));
    }
    let design = dti_design(scheme);
    check_rank(&design)?;
    let y = DVector::from_iterator(signal.len(), signal.iter().map(|s| s.ln()));
    let weights = match weighting {
        Weighting::Observed => DVector::from_iterator(signal.len(), signal.iter().map(|s| s * s)),
        Weighting::Fitted => {
            let gram = design.transpose() * &design;
            let chol = gram
                .cholesky()
                .ok_or(Error::RankDeficient("design has fewer than 7 informative measurements".into()))?;
            let c = chol.solve(&(design.transpose() * &y));
            (&design * c).map(|v| (2.0 * v).exp())
        }
    };
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Rejected("prefit produced non-finite weights".into()));
    }
    let system = LinearSystem::weighted(design, weights, y)?;
    let posterior = fit_posterior(&system)?;
    Ok(DtiFit { posterior, system, scheme: scheme.clone() })
}

fn check_rank(design: &DMatrix<f64>) -> Result<()> {
    if design.nrows() < DTI_COEFFS {
        return Err(Error::RankDeficient(format!("{} measurements for {DTI_COEFFS} coefficients", design.nrows())));
    }
    // Columns have very different scales (1 vs b), so compare after normalising.
    let mut scaled = design.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-10 * max).count();
    if rank < DTI_COEFFS {
        return Err(Error::RankDeficient(format!("design rank {rank} < {DTI_COEFFS}")));
    }
    Ok(())
}

/// `MD = (Dxx + Dyy + Dzz)/3` as a linear functional of the coefficients.
pub fn md_functional() -> AffineMap {
    let t = 1.0 / 3.0;
    AffineMap::functional(&[0.0, t, t, t, 0.0, 0.0, 0.0], 0.0)
}

/// Closed-form MD posterior.
pub fn md_posterior(fit: &DtiFit) -> Result<UnivariateT> {
    pushforward_affine(&fit.posterior, &md_functional())?.to_univariate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaSamples {
    pub samples: Vec<f64>,
    /// Draws whose raw FA fell outside `[0, 1]` and were clamped.
    pub clamped: usize,
}

impl FaSamples {
    pub fn clamped_fraction(&self) -> f64 {
        self.clamped as f64 / self.samples.len() as f64
    }
}

/// FA of coefficient draws.
pub fn fa_posterior_samples(fit: &DtiFit, n_draws: usize, seed: u64) -> Result<FaSamples> {
    let raw =
        sample_posterior_with(&fit.posterior, n_draws, seed, |c| fa_squared_unclamped(&tensor_from_coefficients(c)))?;
    let clamped = raw.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    let samples = raw.into_iter().map(|v| v.clamp(0.0, 1.0).sqrt()).collect();
    Ok(FaSamples { samples, clamped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtopSamples {
    /// RTOP of the accepted draws, mm⁻³.
    pub samples: Vec<f64>,
    /// Draws whose tensor was not positive definite.
    pub rejected: usize,
    pub n_draws: usize,
}

impl RtopSamples {
    /// More than half of the draws were rejected.
    pub fn is_unreliable(&self) -> bool {
        2 * self.rejected > self.n_draws
    }
}

/// RTOP of coefficient draws; draws with non-positive-definite tensors are
/// dropped and counted.
pub fn rtop_posterior_samples(fit: &DtiFit, diffusion_time: f64, n_draws: usize, seed: u64) -> Result<RtopSamples> {
    if !(diffusion_time > 0.0) {
        return Err(Error::InvalidInput(format!("diffusion time must be positive, got {diffusion_time}")));
    }
    let raw = sample_posterior_with(&fit.posterior, n_draws, seed, |c| {
        rtop_of_tensor(&tensor_from_coefficients(c), diffusion_time).ok()
    })?;
    let samples: Vec<f64> = raw.iter().flatten().copied().collect();
    Ok(RtopSamples { rejected: n_draws - samples.len(), samples, n_draws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmri::sphere::fibonacci_hemisphere;
    use crate::dmri::tensor::fa_of_tensor;
    use nalgebra::Vector3;

    fn scheme_b1000() -> AcquisitionScheme {
        let mut b = vec![0.0; 4];
        let mut g = vec![Vector3::zeros(); 4];
        for d in fibonacci_hemisphere(30) {
            b.push(1000.0);
            g.push(d);
        }
        AcquisitionScheme::new(&b, &g).unwrap()
    }

    fn noiseless(scheme: &AcquisitionScheme, d: &DiffusionTensor, s0: f64) -> Vec<f64> {
        scheme.measurements().iter().map(|m| s0 * (-m.bval * d.quadratic_form(&m.direction)).exp()).collect()
    }

    #[test]
    fn design_rows() {
        let s =
            AcquisitionScheme::new(&[0.0, 1000.0, 1000.0], &[Vector3::zeros(), Vector3::x(), Vector3::y()]).unwrap();
        let x = dti_design(&s);
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(x.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, -1000.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let c = DVector::from_vec(vec![0.0, 1.7e-3, 0.2e-3, 0.2e-3, 0.0, 0.0, 0.0]);
        assert!(((x.row(2) * c)[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn design_reproduces_stejskal_tanner() {
        let s = scheme_b1000();
        let d = DiffusionTensor::from_components(&[1.1e-3, 0.5e-3, 0.4e-3, 0.2e-3, -0.1e-3, 0.05e-3]).unwrap();
        let mut c = vec![2.0f64.ln()];
        c.extend_from_slice(&d.components());
        let pred = dti_design(&s) * DVector::from_vec(c);
        for (p, e) in pred.iter().zip(noiseless(&s, &d, 2.0)) {
            assert!((p - e.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_fit_recovers_tensor() {
        let s = scheme_b1000();
        let d = DiffusionTensor::axially_symmetric(0.7e-3, 0.8, &Vector3::new(1.0, 0.3, 0.2)).unwrap();
        for w in [Weighting::Fitted, Weighting::Observed] {
            let fit = dti_fit_wls(&s, &noiseless(&s, &d, 1.0), w).unwrap();
            for (a, b) in fit.tensor().components().iter().zip(d.components()) {
                assert!((a - b).abs() < 1e-10 * d.trace(), "{a} {b}");
            }
            assert!(fit.posterior.sigma2_hat() < 1e-20);
            assert!((fa_of_tensor(&fit.tensor()) - 0.8).abs() < 1e-9);
            let md = md_posterior(&fit).unwrap();
            assert!((md.location() - 0.7e-3).abs() < 1e-14);
            let fa = fa_posterior_samples(&fit, 5, 1).unwrap();
            assert!(fa.samples.iter().all(|v| (v - 0.8).abs() < 1e-6));
        }
    }

    #[test]
    fn b0_only_is_rank_deficient() {
        let s = AcquisitionScheme::new(&[0.0; 10], &[Vector3::zeros(); 10]).unwrap();
        assert!(matches!(dti_fit_wls(&s, &[1.0; 10], Weighting::Fitted), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn nonpositive_signal_rejected() {
        let s = scheme_b1000();
        let mut sig = vec![0.5; s.len()];
        sig[3] = 0.0;
        assert!(matches!(dti_fit_wls(&s, &sig, Weighting::Fitted), Err(Error::Rejected(_))));
    }

    #[test]
    fn point_mass_md_and_rtop() {
        let mean = DVector::from_vec(vec![0.0, 1e-3, 2e-3, 3e-3, 0.0, 0.0, 0.0]);
        let post = PosteriorT::new(mean, 10.0, 0.0, DMatrix::zeros(7, 7)).unwrap();
        let s = scheme_b1000();
        let system = LinearSystem::ordinary(dti_design(&s), DVector::zeros(s.len())).unwrap();
        let fit = DtiFit { posterior: post, system, scheme: s };
        assert!((md_posterior(&fit).unwrap().location() - 2e-3).abs() < 1e-18);
        let r = rtop_posterior_samples(&fit, 0.02, 4, 0).unwrap();
        assert_eq!(r.rejected, 0);
        let expected = rtop_of_tensor(&fit.tensor(), 0.02).unwrap();
        assert!(r.samples.iter().all(|v| *v == expected));
    }
}
