use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Location-scale Student t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateT {
    location: f64,
    scale: f64,
    dof: f64,
}

impl UnivariateT {
    pub fn new(location: f64, scale: f64, dof: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(Error::InvalidInput(format!("location must be finite, got {location}")));
        }
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("scale must be finite and >= 0, got {scale}")));
        }
        if !(dof > 0.0) {
            return Err(Error::NonPositiveDof { dof });
        }
        Ok(UnivariateT { location, scale, dof })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn mean(&self) -> Option<f64> {
        (self.dof > 1.0).then_some(self.location)
    }

    pub fn variance(&self) -> Option<f64> {
        (self.dof > 2.0).then(|| self.scale * self.scale * self.dof / (self.dof - 2.0))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            return if x >= self.location { 1.0 } else { 0.0 };
        }
        standard_cdf((x - self.location) / self.scale, self.dof)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            return if x == self.location { f64::INFINITY } else { 0.0 };
        }
        standard_pdf((x - self.location) / self.scale, self.dof) / self.scale
    }

    /// Inverse CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Probability(p));
        }
        if self.scale == 0.0 {
            return Ok(self.location);
        }
        Ok(self.location + self.scale * standard_quantile(p, self.dof))
    }
}

/// Quantile of a location-scale t distribution; see [`UnivariateT::quantile`].
pub fn t_quantile(p: f64, dist: &UnivariateT) -> Result<f64> {
    dist.quantile(p)
}

fn standard_pdf(z: f64, nu: f64) -> f64 {
    let ln = ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p();
    ln.exp()
}

fn standard_cdf(z: f64, nu: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    let t2 = z * z;
    if t2 < nu {
        // P(|T| < |z|) = I_{z²/(ν+z²)}(1/2, ν/2); accurate near the centre.
        let central = beta_reg(0.5, nu / 2.0, t2 / (nu + t2));
        0.5 + 0.5 * central.copysign(z)
    } else {
        let tail = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + t2));
        if z > 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

/// Safeguarded Newton iteration on the lower tail, using the symmetry
/// `Q(1−p) = −Q(p)`.
fn standard_quantile(p: f64, nu: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let (q, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    if nu == 1.0 {
        return sign * (std::f64::consts::PI * (0.5 - q)).tan();
    }
    if nu == 2.0 {
        let a = 4.0 * q * (1.0 - q);
        return sign * (2.0 / a).sqrt() * (1.0 - 2.0 * q);
    }
    // Lower-tail target: z < 0 with F(z) = q.
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut z = normal.inverse_cdf(q).min(-1e-3);
    let mut hi = 0.0_f64;
    let mut lo = z;
    while standard_cdf(lo, nu) > q {
        hi = lo;
        lo *= 2.0;
        if lo < -1e300 {
            break;
        }
    }
    if standard_cdf(z, nu) > q {
        z = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = standard_cdf(z, nu) - q;
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let density = standard_pdf(z, nu);
        let mut next = z - f / density;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - z).abs() <= 1e-15 * z.abs().max(1.0);
        z = next;
        if converged || (hi - lo) <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
            break;
        }
    }
    sign * z.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_location() {
        let t = UnivariateT::new(2.5, 3.0, 4.0).unwrap();
        assert_eq!(t.quantile(0.5).unwrap(), 2.5);
    }

    #[test]
    fn cauchy_quartile() {
        let t = UnivariateT::new(0.0, 1.0, 1.0).unwrap();
        assert!((t.quantile(0.75).unwrap() - 1.0).abs() < 1e-12);
        assert!((t.quantile(0.25).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_quantile_roundtrip() {
        for &nu in &[3.0, 4.0, 30.0, 300.0] {
            let t = UnivariateT::new(0.7, 1.3, nu).unwrap();
            for &p in &[0.01, 0.1, 0.25, 0.5, 0.9, 0.99] {
                let x = t.quantile(p).unwrap();
                assert!((t.cdf(x) - p).abs() < 1e-10, "nu {nu} p {p}: {}", t.cdf(x));
            }
        }
    }

    #[test]
    fn non_integer_dof_roundtrip() {
        for &nu in &[0.5, 1.5, 2.5, 7.3, 1e6] {
            let t = UnivariateT::new(0.0, 1.0, nu).unwrap();
            for &p in &[1e-4, 0.05, 0.3, 0.7, 0.95] {
                let x = t.quantile(p).unwrap();
                assert!((t.cdf(x) - p).abs() < 1e-10, "nu {nu} p {p}");
            }
        }
    }

    #[test]
    fn known_table_values() {
        // t_{0.975} with 10 dof and 2 dof.
        let t10 = UnivariateT::new(0.0, 1.0, 10.0).unwrap();
        assert!((t10.quantile(0.975).unwrap() - 2.228_138_851_986_273_5).abs() < 1e-9);
        let t2 = UnivariateT::new(0.0, 1.0, 2.0).unwrap();
        assert!((t2.quantile(0.975).unwrap() - 4.302_652_729_749_464).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_probability() {
        let t = UnivariateT::new(0.0, 1.0, 3.0).unwrap();
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(t.quantile(p), Err(Error::Probability(_))));
        }
    }

    #[test]
    fn point_mass() {
        let t = UnivariateT::new(4.0, 0.0, 3.0).unwrap();
        assert_eq!(t.quantile(0.01).unwrap(), 4.0);
        assert_eq!(t.cdf(3.999), 0.0);
        assert_eq!(t.cdf(4.0), 1.0);
    }

    #[test]
    fn pdf_integrates_to_one() {
        let t = UnivariateT::new(0.0, 2.0, 5.0).unwrap();
        let h = 1e-3;
        let total: f64 = (-200_000..200_000).map(|i| t.pdf(i as f64 * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-3);
    }
}
