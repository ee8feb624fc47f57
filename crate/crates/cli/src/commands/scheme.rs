use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dmri_uq::dmri::{AcquisitionScheme, PulseTiming};
use dmri_uq::phantom::make_scheme;
use serde::{Deserialize, Serialize};

use crate::meta::{self, Global};
use crate::usage;

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Args {
    /// Shell b-values in s/mm².
    #[arg(long, value_delimiter = ',', default_values_t = [1000.0, 3000.0, 5000.0, 10000.0])]
    pub shells: Vec<f64>,

    /// Directions per shell.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64, 128, 256])]
    pub dirs: Vec<usize>,

    /// Number of b = 0 measurements.
    #[arg(long, default_value_t = 40)]
    pub b0: usize,

    /// Gradient pulse duration δ in ms.
    #[arg(long, default_value_t = 12.9)]
    pub small_delta: f64,

    /// Pulse separation Δ in ms.
    #[arg(long, default_value_t = 21.8)]
    pub big_delta: f64,

    /// Diffusion time in ms; overrides Δ − δ/3.
    #[arg(long)]
    pub diffusion_time: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,
}

/// Timing stored next to the bvals/bvecs of a scheme directory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct SchemeTiming {
    timing: Option<PulseTiming>,
    diffusion_time: Option<f64>,
}

pub fn build(a: &Args) -> Result<AcquisitionScheme> {
    if a.shells.len() != a.dirs.len() {
        return Err(usage(format!("--shells has {} entries but --dirs has {}", a.shells.len(), a.dirs.len())));
    }
    let timing = PulseTiming::new(a.small_delta * 1e-3, a.big_delta * 1e-3)?;
    let scheme = make_scheme(&a.shells, &a.dirs, a.b0, Some(timing))?;
    Ok(match a.diffusion_time {
        Some(t) => scheme.with_diffusion_time(t * 1e-3)?,
        None => scheme,
    })
}

pub fn write_dir(scheme: &AcquisitionScheme, dir: &Path) -> Result<()> {
    meta::create_dir(dir)?;
    scheme.write_fsl(&dir.join("scheme.bvals"), &dir.join("scheme.bvecs"))?;
    let t = SchemeTiming { timing: scheme.timing(), diffusion_time: scheme.diffusion_time() };
    meta::write_json(&dir.join("timing.json"), &t)
}

/// Reads a directory written by `scheme`; `timing.json` is optional.
pub fn read_dir(dir: &Path) -> Result<AcquisitionScheme> {
    let mut scheme = AcquisitionScheme::read_fsl(&dir.join("scheme.bvals"), &dir.join("scheme.bvecs"))
        .with_context(|| format!("reading scheme from {}", dir.display()))?;
    let path = dir.join("timing.json");
    if path.exists() {
        let t: SchemeTiming =
            serde_json::from_str(&fs::read_to_string(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(timing) = t.timing {
            scheme = scheme.with_timing(timing);
        }
        if let Some(t_d) = t.diffusion_time {
            scheme = scheme.with_diffusion_time(t_d)?;
        }
    }
    Ok(scheme)
}

pub fn run(a: &Args, global: &Global) -> Result<()> {
    let scheme = build(a)?;
    write_dir(&scheme, &a.out)?;
    meta::write_meta(&a.out, "scheme", global, a)?;
    eprintln!("wrote {} measurements to {}", scheme.len(), a.out.display());
    Ok(())
}
