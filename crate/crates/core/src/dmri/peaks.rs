use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::csd::ShFit;
use super::sh::sh_basis;
use super::sphere::SphereGrid;
use crate::bayes::sample_posterior_with;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Minimum axial separation between reported peaks, degrees.
    pub min_separation_deg: f64,
    /// Peaks below this fraction of the largest amplitude are dropped.
    pub rel_threshold: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams { min_separation_deg: 25.0, rel_threshold: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub direction: Vector3<f64>,
    pub amplitude: f64,
}

/// Peaks sorted by decreasing amplitude.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FodfPeaks {
    pub peaks: Vec<Peak>,
}

impl FodfPeaks {
    /// Checks ordering, separation and relative threshold.
    pub fn check(&self, params: &PeakParams) -> Result<()> {
        let Some(first) = self.peaks.first() else { return Ok(()) };
        let cos_min = params.min_separation_deg.to_radians().cos();
        for (i, p) in self.peaks.iter().enumerate() {
            if p.amplitude < params.rel_threshold * first.amplitude || p.amplitude < 0.0 {
                return Err(Error::InvalidInput(format!("peak {i} below threshold")));
            }
            if i > 0 && p.amplitude > self.peaks[i - 1].amplitude {
                return Err(Error::InvalidInput("peaks not sorted by amplitude".into()));
            }
            for q in &self.peaks[..i] {
                if p.direction.dot(&q.direction).abs() > cos_min + 1e-12 {
                    return Err(Error::InvalidInput(format!("peak {i} closer than minimum separation")));
                }
            }
        }
        Ok(())
    }
}

/// Local maxima of grid amplitudes, filtered by relative threshold and
/// greedy minimum separation. `grid` should be a hemisphere grid whose
/// neighbour lists already fold antipodes.
pub fn detect_peaks(amplitudes: &[f64], grid: &SphereGrid, params: &PeakParams) -> FodfPeaks {
    let mut candidates: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let a = amplitudes[i];
            let nbrs = &grid.neighbors[i];
            a > 0.0 && nbrs.iter().all(|&j| a >= amplitudes[j]) && nbrs.iter().any(|&j| a > amplitudes[j])
        })
        .collect();
    candidates.sort_by(|&a, &b| amplitudes[b].total_cmp(&amplitudes[a]).then(a.cmp(&b)));
    let mut peaks: Vec<Peak> = Vec::new();
    let Some(&top) = candidates.first() else { return FodfPeaks::default() };
    let floor = params.rel_threshold * amplitudes[top];
    let cos_min = params.min_separation_deg.to_radians().cos();
    for i in candidates {
        if amplitudes[i] < floor {
            break;
        }
        let d = grid.vertices[i];
        if peaks.iter().all(|p| p.direction.dot(&d).abs() <= cos_min) {
            peaks.push(Peak { direction: d, amplitude: amplitudes[i] });
        }
    }
    let out = FodfPeaks { peaks };
    assert!(out.check(params).is_ok(), "peak list violates its invariants");
    out
}

/// Axial angle between the two largest peaks, degrees in `[0, 90]`;
/// `None` with fewer than two peaks.
pub fn crossing_angle(peaks: &FodfPeaks) -> Option<f64> {
    match peaks.peaks.as_slice() {
        [a, b, ..] => Some(a.direction.dot(&b.direction).abs().min(1.0).acos().to_degrees()),
        _ => None,
    }
}

/// Evaluates fODF coefficients on a fixed grid and finds peaks.
#[derive(Debug, Clone)]
pub struct PeakFinder {
    grid: SphereGrid,
    basis: DMatrix<f64>,
    params: PeakParams,
}

impl PeakFinder {
    pub fn new(grid: SphereGrid, order: usize, params: PeakParams) -> Result<Self> {
        let basis = sh_basis(&grid.vertices, order)?;
        Ok(PeakFinder { grid, basis, params })
    }

    pub fn params(&self) -> &PeakParams {
        &self.params
    }

    pub fn detect(&self, coef: &DVector<f64>) -> FodfPeaks {
        let amps = &self.basis * coef;
        detect_peaks(amps.as_slice(), &self.grid, &self.params)
    }

    pub fn angle(&self, coef: &DVector<f64>) -> Option<f64> {
        crossing_angle(&self.detect(coef))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSamples {
    /// Crossing angles of draws with two detected peaks.
    pub samples: Vec<f64>,
    /// Draws with fewer than two peaks.
    pub undetected: usize,
}

/// Crossing angle of fODF coefficient draws.
pub fn angle_posterior_samples(fit: &ShFit, finder: &PeakFinder, n_draws: usize, seed: u64) -> Result<AngleSamples> {
    let raw = sample_posterior_with(&fit.posterior, n_draws, seed, |c| finder.angle(c))?;
    let samples: Vec<f64> = raw.iter().flatten().copied().collect();
    Ok(AngleSamples { undetected: n_draws - samples.len(), samples })
}
