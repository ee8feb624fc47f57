//! Voxelwise two-group comparison of a scalar quantity from per-subject
//! posterior draws, with optional weighting by posterior precision.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::phantom::{read_matrix_csv, write_matrix_csv};
use crate::rng::{self, Domain};

/// Floor on posterior standard deviations, in quantity units.
pub const SD_FLOOR: f64 = 1e-6;

/// Posterior draws of one subject: `S` draws (rows) by `V` voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPosterior {
    pub id: String,
    pub draws: DMatrix<f64>,
}

impl SubjectPosterior {
    pub fn new(id: impl Into<String>, draws: DMatrix<f64>) -> Result<Self> {
        if draws.nrows() < 2 || draws.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 draws and 1 voxel, got {}×{}",
                draws.nrows(),
                draws.ncols()
            )));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite draw".into()));
        }
        Ok(SubjectPosterior { id: id.into(), draws })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.draws.ncols()
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `1 / max(SD, ε)` per voxel, with the sample SD of the draws.
pub fn subject_weights(sp: &SubjectPosterior) -> Vec<f64> {
    (0..sp.n_voxels()).map(|v| 1.0 / mean_sd(sp.draws.column(v).iter().copied()).1.max(SD_FLOOR)).collect()
}

/// Per-voxel posterior mean over SD of the difference draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianT {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub t: Vec<f64>,
    /// Voxels whose SD hit the floor.
    pub saturated: Vec<bool>,
}

pub fn bayesian_t(diff_draws: &DMatrix<f64>) -> BayesianT {
    let stats: Vec<(f64, f64)> =
        par::map_indexed(diff_draws.ncols(), |v| mean_sd(diff_draws.column(v).iter().copied()));
    let mean: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let sd: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let saturated: Vec<bool> = sd.iter().map(|s| !(*s > SD_FLOOR)).collect();
    let t = mean.iter().zip(&sd).map(|(m, s)| m / s.max(SD_FLOOR)).collect();
    BayesianT { mean, sd, t, saturated }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    /// `S × V` draws of (controls − patients).
    pub diff_draws: DMatrix<f64>,
    pub stats: BayesianT,
    /// Per-subject voxel weights (controls then patients); `None` when unweighted.
    pub weights: Option<Vec<Vec<f64>>>,
}

impl GroupResult {
    pub fn t_score(&self) -> &[f64] {
        &self.stats.t
    }

    /// CSV with columns `voxel, mean, sd, t, saturated`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["voxel", "mean", "sd", "t", "saturated"])?;
        let s = &self.stats;
        for v in 0..s.t.len() {
            w.write_record([
                v.to_string(),
                format!("{}", s.mean[v]),
                format!("{}", s.sd[v]),
                format!("{}", s.t[v]),
                s.saturated[v].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_cohorts(controls: &[SubjectPosterior], patients: &[SubjectPosterior]) -> Result<(usize, usize)> {
    let first = controls.first().or(patients.first()).ok_or_else(|| Error::InvalidInput("empty cohorts".into()))?;
    if controls.is_empty() || patients.is_empty() {
        return Err(Error::InvalidInput("both groups need at least one subject".into()));
    }
    let (s, v) = (first.n_draws(), first.n_voxels());
    if let Some(bad) = controls.iter().chain(patients).find(|p| p.n_draws() != s || p.n_voxels() != v) {
        return Err(Error::Dimension(format!(
            "subject {} has {}×{} draws, expected {s}×{v}",
            bad.id,
            bad.n_draws(),
            bad.n_voxels()
        )));
    }
    Ok((s, v))
}

/// Group means per draw, with optional per-subject voxel weights.
fn group_mean(group: &[SubjectPosterior], weights: Option<&[Vec<f64>]>, s: usize, v: usize) -> DMatrix<f64> {
    let cols = par::map_indexed(v, |j| {
        let (norm, w): (f64, Vec<f64>) = match weights {
            Some(w) => {
                let w: Vec<f64> = w.iter().map(|ws| ws[j]).collect();
                (w.iter().sum(), w)
            }
            None => (group.len() as f64, vec![1.0; group.len()]),
        };
        (0..s)
            .map(|i| group.iter().zip(&w).map(|(g, wi)| g.draws[(i, j)] * wi).sum::<f64>() / norm)
            .collect::<Vec<f64>>()
    });
    DMatrix::from_fn(s, v, |i, j| cols[j][i])
}

/// Difference of plain group means, pairing draws by index.
pub fn unweighted_group_diff(controls: &[SubjectPosterior], patients: &[SubjectPosterior]) -> Result<GroupResult> {
    let (s, v) = check_cohorts(controls, patients)?;
    let diff = group_mean(controls, None, s, v) - group_mean(patients, None, s, v);
    Ok(GroupResult { stats: bayesian_t(&diff), diff_draws: diff, weights: None })
}

/// Difference of group means weighted by [`subject_weights`].
pub fn weighted_group_diff(controls: &[SubjectPosterior], patients: &[SubjectPosterior]) -> Result<GroupResult> {
    let (s, v) = check_cohorts(controls, patients)?;
    let wc: Vec<Vec<f64>> = controls.iter().map(subject_weights).collect();
    let wp: Vec<Vec<f64>> = patients.iter().map(subject_weights).collect();
    let diff = group_mean(controls, Some(&wc), s, v) - group_mean(patients, Some(&wp), s, v);
    let weights = wc.into_iter().chain(wp).collect();
    Ok(GroupResult { stats: bayesian_t(&diff), diff_draws: diff, weights: Some(weights) })
}

/// Method-of-moments beta fit from a mean and variance.
pub fn fit_beta_moments(mean: f64, variance: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0) || !(variance > 0.0) || variance >= mean * (1.0 - mean) {
        return Err(Error::BetaFit { mean, variance });
    }
    let common = mean * (1.0 - mean) / variance - 1.0;
    Ok((mean * common, (1.0 - mean) * common))
}

/// Beta shape parameters `(α, β)` from sample moments.
pub fn fit_beta_mom(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::EmptySamples);
    }
    if samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("beta fit needs samples in [0, 1]".into()));
    }
    let (m, sd) = mean_sd(samples.iter().copied());
    fit_beta_moments(m, sd * sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupLabel {
    Control,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub group: GroupLabel,
    /// Draws CSV, relative to the manifest.
    pub file: PathBuf,
    pub draws: usize,
    pub voxels: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subjects: Vec<ManifestEntry>,
}

/// Writes one draws CSV per subject and `manifest.json` into `dir`.
pub fn write_cohort(
    dir: &Path,
    controls: &[SubjectPosterior],
    patients: &[SubjectPosterior],
    seed: Option<u64>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut subjects = Vec::new();
    for (group, label) in [(controls, GroupLabel::Control), (patients, GroupLabel::Patient)] {
        for sp in group {
            let file = PathBuf::from(format!("{}.csv", sp.id));
            write_matrix_csv(&dir.join(&file), &sp.draws)?;
            subjects.push(ManifestEntry {
                id: sp.id.clone(),
                group: label,
                file,
                draws: sp.n_draws(),
                voxels: sp.n_voxels(),
                seed,
            });
        }
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&Manifest { subjects })? + "\n")?;
    Ok(())
}

/// Reads a manifest and its subjects; returns `(controls, patients)`.
pub fn read_cohort(manifest_path: &Path) -> Result<(Vec<SubjectPosterior>, Vec<SubjectPosterior>)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut controls = Vec::new();
    let mut patients = Vec::new();
    for e in manifest.subjects {
        let draws = read_matrix_csv(&base.join(&e.file))?;
        if draws.nrows() != e.draws || draws.ncols() != e.voxels {
            return Err(Error::Dimension(format!(
                "subject {}: file is {}×{}, manifest says {}×{}",
                e.id,
                draws.nrows(),
                draws.ncols(),
                e.draws,
                e.voxels
            )));
        }
        let sp = SubjectPosterior::new(e.id, draws)?;
        match e.group {
            GroupLabel::Control => controls.push(sp),
            GroupLabel::Patient => patients.push(sp),
        }
    }
    Ok((controls, patients))
}

/// Settings for a synthetic cohort of FA-like draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub controls: usize,
    pub patients: usize,
    pub voxels: usize,
    pub draws: usize,
    /// Group mean of the controls.
    pub base: f64,
    /// Patients' mean is `base − effect`.
    pub effect: f64,
    /// Spread of true subject values around the group mean.
    pub between_sd: f64,
    /// Posterior SD of each subject.
    pub within_sd: f64,
    /// Control subject whose posterior SD is inflated, and the factor.
    pub outlier: Option<(usize, f64)>,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            controls: 20,
            patients: 20,
            voxels: 10,
            draws: 1000,
            base: 0.5,
            effect: 0.02,
            between_sd: 0.01,
            within_sd: 0.02,
            outlier: None,
        }
    }
}

/// Normal posterior draws clamped to `[0, 1]`, one stream per subject.
pub fn synthetic_cohort(spec: &CohortSpec, seed: u64) -> Result<(Vec<SubjectPosterior>, Vec<SubjectPosterior>)> {
    if spec.draws < 2 || spec.voxels == 0 || spec.controls == 0 || spec.patients == 0 {
        return Err(Error::InvalidInput("cohort needs subjects in both groups, voxels and at least 2 draws".into()));
    }
    let make = |idx: usize, id: String, mean: f64, inflate: f64| -> Result<SubjectPosterior> {
        let mut rng = rng::stream(seed, Domain::Synthetic, idx as u64);
        let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| Error::InvalidInput(e.to_string()));
        let truth: Vec<f64> = {
            let between = normal(mean, spec.between_sd)?;
            (0..spec.voxels).map(|_| between.sample(&mut rng)).collect()
        };
        let mut draws = DMatrix::zeros(spec.draws, spec.voxels);
        for (v, t) in truth.iter().enumerate() {
            let within = normal(*t, spec.within_sd * inflate)?;
            for s in 0..spec.draws {
                draws[(s, v)] = within.sample(&mut rng).clamp(0.0, 1.0);
            }
        }
        SubjectPosterior::new(id, draws)
    };
    let controls = (0..spec.controls)
        .map(|i| {
            let inflate = match spec.outlier {
                Some((j, f)) if j == i => f,
                _ => 1.0,
            };
            make(i, format!("control{i:03}"), spec.base, inflate)
        })
        .collect::<Result<Vec<_>>>()?;
    let patients = (0..spec.patients)
        .map(|i| make(spec.controls + i, format!("patient{i:03}"), spec.base - spec.effect, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((controls, patients))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::Beta;

    fn point(id: &str, v: f64, s: usize) -> SubjectPosterior {
        SubjectPosterior::new(id, DMatrix::from_element(s, 1, v)).unwrap()
    }

    #[test]
    fn identical_groups_give_zero() {
        let (c, _) = synthetic_cohort(&CohortSpec { voxels: 3, draws: 50, ..Default::default() }, 1).unwrap();
        let r = unweighted_group_diff(&c, &c).unwrap();
        assert!(r.diff_draws.iter().all(|v| *v == 0.0));
        assert!(r.t_score().iter().all(|t| *t == 0.0));
    }

    #[test]
    fn point_masses() {
        let r = unweighted_group_diff(&[point("a", 0.5, 4)], &[point("b", 0.4, 4)]).unwrap();
        assert!(r.diff_draws.iter().all(|v| (v - 0.1).abs() < 1e-15));
        assert!(r.stats.saturated[0]);
        assert!((r.t_score()[0] - 0.1 / SD_FLOOR).abs() < 1e-3);
        assert!((r.stats.mean[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn weights_follow_sd() {
        let d = DMatrix::from_fn(2, 1, |i, _| if i == 0 { 0.5 - 0.01 * 2f64.sqrt() } else { 0.5 + 0.01 * 2f64.sqrt() });
        let w = subject_weights(&SubjectPosterior::new("x", d).unwrap());
        assert!((w[0] - 50.0).abs() < 1e-9);
        assert_eq!(subject_weights(&point("c", 0.3, 5))[0], 1.0 / SD_FLOOR);
    }

    #[test]
    fn weighted_mean_arithmetic() {
        // Weights 2 and 1 from SDs 0.5 and 1.0; values 3 and 0 → 2.
        let a = DMatrix::from_column_slice(2, 1, &[3.0 - 0.5 / 2f64.sqrt(), 3.0 + 0.5 / 2f64.sqrt()]);
        let b = DMatrix::from_column_slice(2, 1, &[-1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]);
        let c = [SubjectPosterior::new("a", a).unwrap(), SubjectPosterior::new("b", b).unwrap()];
        let zero = [point("z", 0.0, 2)];
        let r = weighted_group_diff(&c, &zero).unwrap();
        assert!((r.stats.mean[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn outlier_is_downweighted_and_pulled_toward_consensus() {
        let spec = CohortSpec { outlier: Some((0, 10.0)), voxels: 4, ..Default::default() };
        let (c, p) = synthetic_cohort(&spec, 4).unwrap();
        let w: Vec<f64> = c.iter().map(|s| subject_weights(s).iter().sum::<f64>() / 4.0).collect();
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        assert!(w[0] <= 0.15 * sorted[sorted.len() / 2]);
        let wr = weighted_group_diff(&c, &p).unwrap();
        let ur = unweighted_group_diff(&c, &p).unwrap();
        for v in 0..4 {
            assert!(wr.stats.sd[v] < ur.stats.sd[v]);
        }
    }

    #[test]
    fn normal_draws_t_score() {
        let mut rng = rng::stream(9, Domain::Synthetic, 0);
        let n = Normal::new(1.0, 0.5).unwrap();
        let d = DMatrix::from_fn(10_000, 1, |_, _| n.sample(&mut rng));
        let t = bayesian_t(&d);
        assert!((t.t[0] / 2.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn beta_fits() {
        let (a, b) = fit_beta_moments(0.5, 1.0 / 12.0).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        let mut rng = rng::stream(1, Domain::Synthetic, 0);
        let beta = Beta::new(2.0, 5.0).unwrap();
        let s: Vec<f64> = (0..100_000).map(|_| beta.sample(&mut rng)).collect();
        let (a, b) = fit_beta_mom(&s).unwrap();
        assert!((a / 2.0 - 1.0).abs() < 0.05 && (b / 5.0 - 1.0).abs() < 0.05);
        let u: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 100_000.0).collect();
        let (a, b) = fit_beta_mom(&u).unwrap();
        assert!((a - 1.0).abs() < 0.1 && (b - 1.0).abs() < 0.1);
        assert!(matches!(fit_beta_mom(&[0.0, 1.0, 0.0, 1.0]), Err(Error::BetaFit { .. })));
    }

    #[test]
    fn cohort_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec { controls: 2, patients: 3, voxels: 2, draws: 5, ..Default::default() };
        let (c, p) = synthetic_cohort(&spec, 2).unwrap();
        write_cohort(dir.path(), &c, &p, Some(2)).unwrap();
        let (c2, p2) = read_cohort(&dir.path().join("manifest.json")).unwrap();
        assert_eq!((c, p), (c2, p2));
    }

    #[test]
    fn equal_weights_match_unweighted() {
        // Every subject is the same draw pattern plus an offset, so all SDs agree.
        let pattern = DMatrix::from_fn(200, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 / 100.0);
        let cohort = |offsets: &[f64], tag: &str| -> Vec<SubjectPosterior> {
            offsets
                .iter()
                .enumerate()
                .map(|(k, o)| SubjectPosterior::new(format!("{tag}{k}"), pattern.add_scalar(*o)).unwrap())
                .collect()
        };
        let c = cohort(&[0.4, 0.45, 0.5], "c");
        let p = cohort(&[0.35, 0.42], "p");
        let w = weighted_group_diff(&c, &p).unwrap();
        let u = unweighted_group_diff(&c, &p).unwrap();
        for v in 0..3 {
            assert!((w.t_score()[v] - u.t_score()[v]).abs() < 1e-10 * u.t_score()[v].abs().max(1.0));
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        assert!(unweighted_group_diff(&[point("a", 0.1, 3)], &[point("b", 0.1, 4)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn group_properties(seed in 0u64..1000, shift in -0.2f64..0.2, scale in 0.1f64..10.0) {
            let spec = CohortSpec { controls: 3, patients: 4, voxels: 2, draws: 40, ..Default::default() };
            let (c, p) = synthetic_cohort(&spec, seed).unwrap();
            let fwd = weighted_group_diff(&c, &p).unwrap();
            let rev = weighted_group_diff(&p, &c).unwrap();
            prop_assert_eq!(&fwd.diff_draws, &(-&rev.diff_draws));
            for v in 0..2 {
                prop_assert_eq!(fwd.t_score()[v], -rev.t_score()[v]);
            }
            let shifted = SubjectPosterior::new("s", c[0].draws.add_scalar(shift)).unwrap();
            for (a, b) in subject_weights(&c[0]).iter().zip(subject_weights(&shifted)) {
                prop_assert!((a / b - 1.0).abs() < 1e-9);
            }
            let scaled_c: Vec<_> = c.iter().map(|s| SubjectPosterior::new(s.id.clone(), &s.draws * scale).unwrap()).collect();
            let scaled_p: Vec<_> = p.iter().map(|s| SubjectPosterior::new(s.id.clone(), &s.draws * scale).unwrap()).collect();
            let u = unweighted_group_diff(&c, &p).unwrap();
            let us = unweighted_group_diff(&scaled_c, &scaled_p).unwrap();
            for v in 0..2 {
                prop_assert!((u.t_score()[v] - us.t_score()[v]).abs() < 1e-9 * u.t_score()[v].abs().max(1.0));
            }
        }
    }
}
