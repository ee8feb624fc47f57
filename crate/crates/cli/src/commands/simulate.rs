use std::path::PathBuf;

use anyhow::{Context, Result};
use dmri_uq::phantom::{connectome_scheme, NoiseKind, NoiseSpec, Phantom, TrialSet};
use serde::{Deserialize, Serialize};

use crate::commands::scheme;
use crate::meta::{self, Global};
use crate::usage;

#[derive(clap::ValueEnum, Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Rician,
    Gaussian,
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Args {
    /// Fractional anisotropy of each compartment.
    #[arg(long, default_value_t = 0.8)]
    pub fa: f64,

    /// Mean diffusivity in mm²/s.
    #[arg(long, default_value_t = 0.7e-3)]
    pub md: f64,

    /// Crossing angle in degrees; gives two equal compartments.
    #[arg(long)]
    pub angle: Option<f64>,

    #[arg(long, default_value_t = 1.0)]
    pub s0: f64,

    /// Noise standard deviation relative to S0.
    #[arg(long, default_value_t = 0.05)]
    pub sigma_rel: f64,

    #[arg(long, value_enum, default_value_t = Noise::Rician)]
    pub noise: Noise,

    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    /// Scheme directory; the built-in four-shell protocol when absent.
    #[arg(long)]
    pub scheme: Option<PathBuf>,

    /// Keep only measurements with b ≤ bmax.
    #[arg(long)]
    pub bmax: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &Args, global: &Global) -> Result<()> {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let mut scheme = match &a.scheme {
        Some(dir) => scheme::read_dir(dir)?,
        None => connectome_scheme(),
    };
    if let Some(bmax) = a.bmax {
        scheme = scheme.subset(&scheme.indices_up_to(bmax))?;
    }
    let phantom = match a.angle {
        Some(angle) => Phantom::crossing(a.md, a.fa, angle, a.s0)?,
        None => Phantom::single(a.md, a.fa, a.s0)?,
    };
    let kind = match a.noise {
        Noise::Rician => NoiseKind::Rician,
        Noise::Gaussian => NoiseKind::Gaussian,
    };
    let noise = NoiseSpec::new(kind, a.sigma_rel * a.s0)?;
    let ts = TrialSet::simulate(&phantom, &scheme, noise, a.trials, global.seed)?;
    ts.write_dir(&a.out).with_context(|| format!("writing trial set to {}", a.out.display()))?;
    let base = serde_json::to_value(&ts.meta)?;
    meta::write_meta_over(&a.out, "simulate", global, a, Some(base))?;
    eprintln!("simulated {} trials of {} measurements into {}", a.trials, scheme.len(), a.out.display());
    Ok(())
}
