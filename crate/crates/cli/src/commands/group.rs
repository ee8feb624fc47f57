use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use dmri_uq::group::{read_cohort, unweighted_group_diff, weighted_group_diff, GroupResult};
use serde::{Deserialize, Serialize};

use crate::meta::{self, Global};
use crate::{svg, usage};

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Args {
    /// Cohort manifest (`manifest.json`).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Weight subjects by their inverse posterior SD.
    #[arg(long)]
    pub weighted: bool,

    /// Run both analyses and report where they diverge.
    #[arg(long, conflicts_with = "weighted")]
    pub compare: bool,

    /// Also plot the difference draws of this voxel.
    #[arg(long)]
    pub histogram_voxel: Option<usize>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Comparison {
    voxels: usize,
    max_abs_t_difference: f64,
    voxel_of_max: usize,
    t_unweighted: Vec<f64>,
    t_weighted: Vec<f64>,
}

fn histogram(a: &Args, r: &GroupResult, name: &str) -> Result<()> {
    let Some(v) = a.histogram_voxel else { return Ok(()) };
    if v >= r.diff_draws.ncols() {
        return Err(usage(format!("--histogram-voxel {v} but the cohort has {} voxels", r.diff_draws.ncols())));
    }
    let draws: Vec<f64> = r.diff_draws.column(v).iter().copied().collect();
    let title = format!("control − patient draws, voxel {v}");
    fs::write(a.out.join(name), svg::histogram(&title, "difference", &draws, 40))?;
    Ok(())
}

pub fn run(a: &Args, global: &Global) -> Result<()> {
    let (controls, patients) =
        read_cohort(&a.manifest).with_context(|| format!("reading cohort {}", a.manifest.display()))?;
    meta::create_dir(&a.out)?;
    if a.compare {
        let u = unweighted_group_diff(&controls, &patients)?;
        let w = weighted_group_diff(&controls, &patients)?;
        u.write_csv(&a.out.join("group_unweighted.csv"))?;
        w.write_csv(&a.out.join("group_weighted.csv"))?;
        histogram(a, &u, "histogram_unweighted.svg")?;
        histogram(a, &w, "histogram_weighted.svg")?;
        let diffs: Vec<f64> = u.t_score().iter().zip(w.t_score()).map(|(x, y)| (x - y).abs()).collect();
        let (voxel_of_max, max) =
            diffs.iter().copied().enumerate().fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        let cmp = Comparison {
            voxels: diffs.len(),
            max_abs_t_difference: max,
            voxel_of_max,
            t_unweighted: u.t_score().to_vec(),
            t_weighted: w.t_score().to_vec(),
        };
        meta::write_json(&a.out.join("comparison.json"), &cmp)?;
        eprintln!("max |t_weighted − t_unweighted| = {max:.4} at voxel {voxel_of_max}");
    } else {
        let r = if a.weighted {
            weighted_group_diff(&controls, &patients)?
        } else {
            unweighted_group_diff(&controls, &patients)?
        };
        r.write_csv(&a.out.join("group.csv"))?;
        histogram(a, &r, "histogram.svg")?;
        eprintln!("{} controls, {} patients, {} voxels", controls.len(), patients.len(), r.t_score().len());
    }
    meta::write_meta(&a.out, "group", global, a)
}
