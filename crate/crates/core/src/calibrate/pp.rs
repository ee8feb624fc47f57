use std::path::Path;

use serde::{Deserialize, Serialize};

use super::quantity::QuantityPosterior;
use crate::error::{Error, Result};
use crate::par;

/// Observed coverage of the posterior quantiles across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPCurve {
    pub p_grid: Vec<f64>,
    /// Fraction of trials with `truth ≤ Q_t(p)`.
    pub coverage: Vec<f64>,
    pub n_trials: usize,
    /// Binomial 95% band `p ± 1.96√(p(1−p)/n)`, clipped to `[0, 1]`.
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
}

impl PPCurve {
    fn from_counts(p_grid: &[f64], counts: Vec<usize>, n: usize) -> Self {
        let coverage = counts.iter().map(|c| *c as f64 / n as f64).collect();
        let half: Vec<f64> = p_grid.iter().map(|p| 1.96 * (p * (1.0 - p) / n as f64).sqrt()).collect();
        PPCurve {
            p_grid: p_grid.to_vec(),
            coverage,
            n_trials: n,
            band_lo: p_grid.iter().zip(&half).map(|(p, h)| (p - h).max(0.0)).collect(),
            band_hi: p_grid.iter().zip(&half).map(|(p, h)| (p + h).min(1.0)).collect(),
        }
    }

    /// `max |coverage(p) − p|` over grid points with `lo ≤ p ≤ hi`.
    pub fn sup_deviation_within(&self, lo: f64, hi: f64) -> f64 {
        self.p_grid
            .iter()
            .zip(&self.coverage)
            .filter(|(p, _)| **p >= lo - 1e-12 && **p <= hi + 1e-12)
            .map(|(p, c)| (c - p).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_deviation(&self) -> f64 {
        self.sup_deviation_within(0.0, 1.0)
    }

    /// `max |coverage − other.coverage|`; both curves must share a grid.
    pub fn sup_distance(&self, other: &PPCurve) -> Result<f64> {
        if self.p_grid != other.p_grid {
            return Err(Error::Dimension("curves use different probability grids".into()));
        }
        Ok(self.coverage.iter().zip(&other.coverage).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Fraction of grid points whose coverage lies inside the band.
    pub fn fraction_in_band(&self) -> f64 {
        let inside = (0..self.p_grid.len())
            .filter(|&i| self.coverage[i] >= self.band_lo[i] && self.coverage[i] <= self.band_hi[i])
            .count();
        inside as f64 / self.p_grid.len() as f64
    }

    /// CSV with columns `p, coverage, band_lo, band_hi`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["p", "coverage", "band_lo", "band_hi"])?;
        for i in 0..self.p_grid.len() {
            w.write_record(
                [self.p_grid[i], self.coverage[i], self.band_lo[i], self.band_hi[i]].map(|v| format!("{v}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `0.01, 0.02, …, 0.99`.
pub fn default_p_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

fn check_grid(p_grid: &[f64]) -> Result<()> {
    if p_grid.is_empty() {
        return Err(Error::InvalidInput("empty probability grid".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Probability(*p));
    }
    Ok(())
}

fn coverage_counts(posteriors: &[QuantityPosterior], truths: &[f64], shift: f64, p_grid: &[f64]) -> Result<Vec<usize>> {
    let per_trial: Vec<Result<Vec<bool>>> = par::map_indexed(posteriors.len(), |t| {
        p_grid.iter().map(|&p| Ok(truths[t] <= posteriors[t].quantile(p)? - shift)).collect()
    });
    let mut counts = vec![0; p_grid.len()];
    for hits in per_trial {
        for (c, h) in counts.iter_mut().zip(hits?) {
            *c += h as usize;
        }
    }
    Ok(counts)
}

/// Coverage of a common truth.
pub fn pp_curve(posteriors: &[QuantityPosterior], truth: f64, p_grid: &[f64]) -> Result<PPCurve> {
    pp_curve_per_trial(posteriors, &vec![truth; posteriors.len()], p_grid)
}

/// Coverage when every trial has its own truth.
pub fn pp_curve_per_trial(posteriors: &[QuantityPosterior], truths: &[f64], p_grid: &[f64]) -> Result<PPCurve> {
    validate(posteriors, truths, p_grid)?;
    let counts = coverage_counts(posteriors, truths, 0.0, p_grid)?;
    Ok(PPCurve::from_counts(p_grid, counts, posteriors.len()))
}

fn validate(posteriors: &[QuantityPosterior], truths: &[f64], p_grid: &[f64]) -> Result<()> {
    if posteriors.is_empty() {
        return Err(Error::EmptySamples);
    }
    if truths.len() != posteriors.len() {
        return Err(Error::Dimension(format!("{} truths for {} posteriors", truths.len(), posteriors.len())));
    }
    if truths.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("truth must be finite".into()));
    }
    check_grid(p_grid)
}

/// Coverage after subtracting the average error of the posterior means
/// from every quantile. Returns the curve and the bias.
pub fn bias_corrected_pp(posteriors: &[QuantityPosterior], truth: f64, p_grid: &[f64]) -> Result<(PPCurve, f64)> {
    let truths = vec![truth; posteriors.len()];
    validate(posteriors, &truths, p_grid)?;
    let bias = posteriors.iter().map(|q| q.mean() - truth).sum::<f64>() / posteriors.len() as f64;
    let counts = coverage_counts(posteriors, &truths, bias, p_grid)?;
    Ok((PPCurve::from_counts(p_grid, counts, posteriors.len()), bias))
}
