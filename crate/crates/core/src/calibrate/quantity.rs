use serde::{Deserialize, Serialize};

use crate::bayes::UnivariateT;
use crate::error::{Error, Result};

/// Posterior of a scalar quantity: closed form or a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuantityPosterior {
    ClosedForm(UnivariateT),
    /// Sorted ascending.
    Empirical(Vec<f64>),
}

impl QuantityPosterior {
    /// Sorts the samples; non-finite values are rejected.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        Ok(QuantityPosterior::Empirical(samples))
    }

    /// Posterior mean; the location for closed forms.
    pub fn mean(&self) -> f64 {
        match self {
            QuantityPosterior::ClosedForm(t) => t.location(),
            QuantityPosterior::Empirical(s) => s.iter().sum::<f64>() / s.len() as f64,
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Probability(p));
        }
        match self {
            QuantityPosterior::ClosedForm(t) => t.quantile(p),
            QuantityPosterior::Empirical(s) => {
                if s.is_empty() {
                    return Err(Error::EmptySamples);
                }
                // 1-based position p(n−1)+1 between order statistics.
                let h = p * (s.len() - 1) as f64;
                let lo = h.floor() as usize;
                let hi = (lo + 1).min(s.len() - 1);
                Ok(s[lo] + (h - lo as f64) * (s[hi] - s[lo]))
            }
        }
    }

    pub fn iqr(&self) -> Result<f64> {
        Ok(self.quantile(0.75)? - self.quantile(0.25)?)
    }
}

pub fn quantile(qp: &QuantityPosterior, p: f64) -> Result<f64> {
    qp.quantile(p)
}

pub fn iqr(qp: &QuantityPosterior) -> Result<f64> {
    qp.iqr()
}
