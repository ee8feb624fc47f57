use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// b-values closer than this (s/mm²) to a shell's running mean join it.
pub const SHELL_TOLERANCE: f64 = 50.0;

/// Gradient pulse timing in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTiming {
    /// Pulse duration δ.
    pub small_delta: f64,
    /// Pulse separation Δ.
    pub big_delta: f64,
}

impl PulseTiming {
    pub fn new(small_delta: f64, big_delta: f64) -> Result<Self> {
        if !(small_delta > 0.0) || !(big_delta > small_delta / 3.0) {
            return Err(Error::InvalidInput(format!("invalid pulse timing δ = {small_delta}, Δ = {big_delta}")));
        }
        Ok(PulseTiming { small_delta, big_delta })
    }

    /// Timing of the MGH Connectome multi-shell protocol (δ = 12.9 ms,
    /// Δ = 21.8 ms).
    pub fn connectome() -> Self {
        PulseTiming { small_delta: 0.0129, big_delta: 0.0218 }
    }

    /// `t_d = Δ − δ/3`.
    pub fn diffusion_time(&self) -> f64 {
        self.big_delta - self.small_delta / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// s/mm².
    pub bval: f64,
    pub direction: Vector3<f64>,
    pub shell: usize,
}

/// A list of diffusion measurements with optional timing.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionScheme {
    measurements: Vec<Measurement>,
    shell_bvals: Vec<f64>,
    diffusion_time: Option<f64>,
    timing: Option<PulseTiming>,
}

impl AcquisitionScheme {
    /// Builds a scheme from b-values and directions; shells are assigned by
    /// clustering. Directions of diffusion-weighted entries are normalised,
    /// b = 0 directions are kept as given.
    pub fn new(bvals: &[f64], directions: &[Vector3<f64>]) -> Result<Self> {
        if bvals.len() != directions.len() {
            return Err(Error::Dimension(format!("{} b-values but {} directions", bvals.len(), directions.len())));
        }
        if bvals.is_empty() {
            return Err(Error::InvalidInput("empty acquisition scheme".into()));
        }
        let mut measurements = Vec::with_capacity(bvals.len());
        for (i, (&b, g)) in bvals.iter().zip(directions).enumerate() {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::InvalidInput(format!("b-value {b} at entry {i}")));
            }
            let direction = if b > SHELL_TOLERANCE {
                let norm = g.norm();
                if !(norm > 0.5) || !norm.is_finite() {
                    return Err(Error::InvalidInput(format!("direction at entry {i} has length {norm}")));
                }
                g / norm
            } else {
                *g
            };
            measurements.push(Measurement { bval: b, direction, shell: 0 });
        }
        let (shell_bvals, labels) = cluster_shells(bvals);
        for (m, s) in measurements.iter_mut().zip(labels) {
            m.shell = s;
        }
        Ok(AcquisitionScheme { measurements, shell_bvals, diffusion_time: None, timing: None })
    }

    pub fn with_timing(mut self, timing: PulseTiming) -> Self {
        self.diffusion_time = Some(timing.diffusion_time());
        self.timing = Some(timing);
        self
    }

    /// Sets `t_d` directly; drops pulse timings that disagree with it.
    pub fn with_diffusion_time(mut self, t_d: f64) -> Result<Self> {
        if !(t_d > 0.0) {
            return Err(Error::InvalidInput(format!("diffusion time must be positive, got {t_d}")));
        }
        if let Some(t) = self.timing {
            if (t.diffusion_time() - t_d).abs() > 1e-12 {
                self.timing = None;
            }
        }
        self.diffusion_time = Some(t_d);
        Ok(self)
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn bvals(&self) -> Vec<f64> {
        self.measurements.iter().map(|m| m.bval).collect()
    }

    pub fn directions(&self) -> Vec<Vector3<f64>> {
        self.measurements.iter().map(|m| m.direction).collect()
    }

    /// Mean b-value of each shell, ascending; shell 0 is the b = 0 shell if present.
    pub fn shell_bvals(&self) -> &[f64] {
        &self.shell_bvals
    }

    pub fn diffusion_time(&self) -> Option<f64> {
        self.diffusion_time
    }

    pub fn timing(&self) -> Option<PulseTiming> {
        self.timing
    }

    /// Indices of measurements with `b ≤ bmax + tolerance`.
    pub fn indices_up_to(&self, bmax: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.measurements[i].bval <= bmax + SHELL_TOLERANCE).collect()
    }

    /// Indices of the diffusion-weighted measurements within tolerance of `bval`.
    pub fn indices_of_shell(&self, bval: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let b = self.measurements[i].bval;
                b > SHELL_TOLERANCE && (b - bval).abs() <= SHELL_TOLERANCE
            })
            .collect()
    }

    /// The scheme restricted to `indices` (in that order); shells are re-clustered.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Dimension(format!("index {bad} out of range for {} measurements", self.len())));
        }
        let b: Vec<f64> = indices.iter().map(|&i| self.measurements[i].bval).collect();
        let g: Vec<Vector3<f64>> = indices.iter().map(|&i| self.measurements[i].direction).collect();
        let mut out = AcquisitionScheme::new(&b, &g)?;
        out.diffusion_time = self.diffusion_time;
        out.timing = self.timing;
        Ok(out)
    }

    /// Number of distinct diffusion-weighted shells.
    pub fn weighted_shell_count(&self) -> usize {
        self.shell_bvals.iter().filter(|&&b| b > SHELL_TOLERANCE).count()
    }

    /// Writes FSL-style `bvals` (one row) and `bvecs` (three rows).
    pub fn write_fsl(&self, bvals: &Path, bvecs: &Path) -> Result<()> {
        let row = |f: &dyn Fn(&Measurement) -> f64| {
            self.measurements.iter().map(|m| format!("{}", f(m))).collect::<Vec<_>>().join(" ")
        };
        fs::write(bvals, row(&|m| m.bval) + "\n")?;
        let vecs = [row(&|m| m.direction.x), row(&|m| m.direction.y), row(&|m| m.direction.z)].join("\n");
        fs::write(bvecs, vecs + "\n")?;
        Ok(())
    }

    /// Reads FSL-style `bvals`/`bvecs`. A bvecs file with one direction per
    /// line (n×3) is accepted too.
    pub fn read_fsl(bvals: &Path, bvecs: &Path) -> Result<Self> {
        let b = parse_numbers(&fs::read_to_string(bvals)?)?;
        let rows: Vec<Vec<f64>> = fs::read_to_string(bvecs)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let n = b.iter().map(Vec::len).sum::<usize>();
        let b: Vec<f64> = b.into_iter().flatten().collect();
        let dirs: Vec<Vector3<f64>> = if rows.len() == 3 && rows.iter().all(|r| r.len() == n) {
            (0..n).map(|i| Vector3::new(rows[0][i], rows[1][i], rows[2][i])).collect()
        } else if rows.len() == n && rows.iter().all(|r| r.len() == 3) {
            rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect()
        } else {
            return Err(Error::Parse(format!("bvecs shape does not match {n} b-values")));
        };
        AcquisitionScheme::new(&b, &dirs)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")))
}

fn parse_numbers(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.split_whitespace().map(parse_f64).collect()).collect()
}

/// Greedy 1-D clustering of sorted b-values; returns shell means and labels.
fn cluster_shells(bvals: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..bvals.len()).collect();
    order.sort_by(|&a, &b| bvals[a].total_cmp(&bvals[b]));
    let mut labels = vec![0; bvals.len()];
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for &i in &order {
        let b = bvals[i];
        match sums.last_mut() {
            Some((sum, count)) if (b - *sum / *count as f64).abs() <= SHELL_TOLERANCE => {
                *sum += b;
                *count += 1;
            }
            _ => sums.push((b, 1)),
        }
        labels[i] = sums.len() - 1;
    }
    (sums.iter().map(|(s, c)| s / *c as f64).collect(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn connectome_timing() {
        let t = PulseTiming::connectome();
        assert!((t.diffusion_time() - 0.0175).abs() < 1e-15);
    }

    #[test]
    fn shells_are_clustered() {
        let b = [0.0, 5.0, 995.0, 1000.0, 1010.0, 3000.0, 2990.0];
        let g = vec![Vector3::x(); b.len()];
        let s = AcquisitionScheme::new(&b, &g).unwrap();
        assert_eq!(s.shell_bvals().len(), 3);
        let shells: Vec<usize> = s.measurements().iter().map(|m| m.shell).collect();
        assert_eq!(shells, vec![0, 0, 1, 1, 1, 2, 2]);
        assert_eq!(s.weighted_shell_count(), 2);
        assert_eq!(s.indices_of_shell(3000.0), vec![5, 6]);
        assert_eq!(s.indices_up_to(1000.0).len(), 5);
    }

    #[test]
    fn fsl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let b = [0.0, 1000.0, 1000.0];
        let g = [Vector3::zeros(), Vector3::new(0.6, 0.8, 0.0), Vector3::new(0.0, 0.0, -1.0)];
        let s = AcquisitionScheme::new(&b, &g).unwrap();
        let (pb, pv) = (dir.path().join("bvals"), dir.path().join("bvecs"));
        s.write_fsl(&pb, &pv).unwrap();
        let r = AcquisitionScheme::read_fsl(&pb, &pv).unwrap();
        assert_eq!(r.measurements(), s.measurements());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AcquisitionScheme::new(&[-1.0], &[Vector3::x()]).is_err());
        assert!(AcquisitionScheme::new(&[1000.0], &[Vector3::zeros()]).is_err());
        assert!(AcquisitionScheme::new(&[1000.0, 0.0], &[Vector3::x()]).is_err());
    }
}
