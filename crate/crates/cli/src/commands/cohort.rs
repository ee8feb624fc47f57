use std::path::PathBuf;

use anyhow::Result;
use dmri_uq::group::{synthetic_cohort, write_cohort, CohortSpec};
use serde::{Deserialize, Serialize};

use crate::meta::{self, Global};
use crate::usage;

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Args {
    #[arg(long, default_value_t = 20)]
    pub controls: usize,

    #[arg(long, default_value_t = 20)]
    pub patients: usize,

    #[arg(long, default_value_t = 10)]
    pub voxels: usize,

    /// Posterior draws per subject.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,

    /// Control group mean.
    #[arg(long, default_value_t = 0.5)]
    pub base: f64,

    /// Patients' mean is base − effect.
    #[arg(long, default_value_t = 0.02)]
    pub effect: f64,

    #[arg(long, default_value_t = 0.01)]
    pub between_sd: f64,

    /// Posterior SD of every subject.
    #[arg(long, default_value_t = 0.02)]
    pub within_sd: f64,

    /// Control subject whose posterior SD is inflated.
    #[arg(long, requires = "outlier_factor")]
    pub outlier_subject: Option<usize>,

    #[arg(long, requires = "outlier_subject")]
    pub outlier_factor: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &Args, global: &Global) -> Result<()> {
    if let Some(i) = a.outlier_subject {
        if i >= a.controls {
            return Err(usage(format!("--outlier-subject {i} but there are {} controls", a.controls)));
        }
    }
    let spec = CohortSpec {
        controls: a.controls,
        patients: a.patients,
        voxels: a.voxels,
        draws: a.draws,
        base: a.base,
        effect: a.effect,
        between_sd: a.between_sd,
        within_sd: a.within_sd,
        outlier: a.outlier_subject.zip(a.outlier_factor),
    };
    let (controls, patients) = synthetic_cohort(&spec, global.seed)?;
    write_cohort(&a.out, &controls, &patients, Some(global.seed))?;
    meta::write_meta(&a.out, "cohort", global, a)?;
    eprintln!("wrote {} subjects to {}", controls.len() + patients.len(), a.out.display());
    Ok(())
}
