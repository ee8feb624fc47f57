use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dmri_uq::bayes::{PosteriorRecord, PosteriorT};
use dmri_uq::dmri::{CsdParams, DtiFit, PeakParams, ShFit, Weighting};
use dmri_uq::experiment::{fit_csd_trials, fit_dti_trials, phantom_response, CsdSetup};
use dmri_uq::par;
use dmri_uq::phantom::TrialSet;
use serde::{Deserialize, Serialize};

use crate::meta::{self, Global};

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Dti,
    Csd,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    /// Weights from an OLS prefit of the log signal.
    Fitted,
    /// Weights from the observed signal.
    Observed,
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Args {
    #[arg(value_enum)]
    pub model: Model,

    /// Trial set directory written by `simulate`.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    /// DTI: use measurements with b ≤ bmax.
    #[arg(long, default_value_t = 1000.0)]
    pub bmax: f64,

    /// DTI: weighted least-squares weights.
    #[arg(long, value_enum, default_value_t = WeightingArg::Fitted)]
    pub weighting: WeightingArg,

    /// CSD: shell to deconvolve.
    #[arg(long, default_value_t = 3000.0)]
    pub shell: f64,

    /// CSD: maximal even SH order.
    #[arg(long, default_value_t = 10)]
    pub order: usize,

    /// CSD: regularization strength.
    #[arg(long, default_value_t = 5.0)]
    pub lambda: f64,

    /// CSD: negativity threshold relative to the mean amplitude.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,

    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,

    /// CSD: icosphere subdivision level of the constraint and peak grid.
    #[arg(long, default_value_t = 4)]
    pub grid_level: usize,

    /// Peaks: minimum separation in degrees.
    #[arg(long, default_value_t = 25.0)]
    pub min_separation: f64,

    /// Peaks: amplitude threshold relative to the largest peak.
    #[arg(long, default_value_t = 0.1)]
    pub rel_threshold: f64,
}

impl Args {
    pub fn csd_params(&self) -> CsdParams {
        CsdParams {
            order: self.order,
            lambda: self.lambda,
            tau: self.tau,
            max_iter: self.max_iter,
            grid_level: self.grid_level,
        }
    }

    pub fn peak_params(&self) -> PeakParams {
        PeakParams { min_separation_deg: self.min_separation, rel_threshold: self.rel_threshold }
    }

    pub fn weighting(&self) -> Weighting {
        match self.weighting {
            WeightingArg::Fitted => Weighting::Fitted,
            WeightingArg::Observed => Weighting::Observed,
        }
    }
}

pub enum Fits {
    Dti(Vec<dmri_uq::Result<DtiFit>>),
    Csd(Box<CsdSetup>, Vec<dmri_uq::Result<ShFit>>),
}

impl Fits {
    pub fn posterior(&self, t: usize) -> Option<&PosteriorT> {
        match self {
            Fits::Dti(f) => f[t].as_ref().ok().map(|f| &f.posterior),
            Fits::Csd(_, f) => f[t].as_ref().ok().map(|f| &f.posterior),
        }
    }

    /// The first failed fit, consuming the set.
    pub fn into_first_error(self) -> Option<dmri_uq::Error> {
        match self {
            Fits::Dti(f) => f.into_iter().find_map(Result::err),
            Fits::Csd(_, f) => f.into_iter().find_map(Result::err),
        }
    }
}

/// Fits every trial of `ts` with the model configured in `a`.
pub fn fit_all(a: &Args, ts: &TrialSet) -> Result<Fits> {
    Ok(match a.model {
        Model::Dti => Fits::Dti(fit_dti_trials(ts, a.bmax, a.weighting())?),
        Model::Csd => {
            let (tensor, s0) = phantom_response(ts);
            let setup = CsdSetup::new(&ts.scheme, a.shell, &tensor, s0, a.csd_params(), a.peak_params())?;
            let fits = fit_csd_trials(ts, &setup);
            Fits::Csd(Box::new(setup), fits)
        }
    })
}

/// One line of `posteriors.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitLine {
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

#[derive(Debug, Serialize)]
struct Summary {
    model: Model,
    trials: usize,
    fitted: usize,
    failed: usize,
    heavy_tailed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    csd: Option<CsdSummary>,
}

#[derive(Debug, Serialize)]
struct CsdSummary {
    converged: usize,
    mean_iterations: f64,
    lambda_eff: f64,
    /// Trials whose posterior-mean fODF shows two peaks.
    detected: usize,
    mean_crossing_angle: Option<f64>,
}

fn lines(fits: &Fits) -> Vec<FitLine> {
    let line = |trial, post: Option<&PosteriorT>, err: Option<String>| FitLine {
        trial,
        posterior: post.map(PosteriorT::to_record),
        error: err,
        iterations: None,
        converged: None,
    };
    match fits {
        Fits::Dti(f) => par::map_indexed(f.len(), |t| match &f[t] {
            Ok(fit) => line(t, Some(&fit.posterior), None),
            Err(e) => line(t, None, Some(e.to_string())),
        }),
        Fits::Csd(_, f) => par::map_indexed(f.len(), |t| match &f[t] {
            Ok(fit) => FitLine {
                iterations: Some(fit.iterations),
                converged: Some(fit.converged),
                ..line(t, Some(&fit.posterior), None)
            },
            Err(e) => line(t, None, Some(e.to_string())),
        }),
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<FitLine>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

fn summarize(a: &Args, fits: &Fits, lines: &[FitLine]) -> Summary {
    let fitted = lines.iter().filter(|l| l.posterior.is_some()).count();
    let heavy_tailed = lines.iter().filter_map(|l| l.posterior.as_ref()).filter(|p| p.heavy_tailed).count();
    let csd = match fits {
        Fits::Dti(_) => None,
        Fits::Csd(setup, f) => {
            let ok: Vec<&ShFit> = f.iter().filter_map(|r| r.as_ref().ok()).collect();
            let angles: Vec<f64> =
                par::map_slice(&ok, |fit| setup.finder.angle(fit.posterior.mean())).into_iter().flatten().collect();
            Some(CsdSummary {
                converged: ok.iter().filter(|f| f.converged).count(),
                mean_iterations: ok.iter().map(|f| f.iterations as f64).sum::<f64>() / ok.len().max(1) as f64,
                lambda_eff: setup.model.lambda_eff(),
                detected: angles.len(),
                mean_crossing_angle: (!angles.is_empty()).then(|| angles.iter().sum::<f64>() / angles.len() as f64),
            })
        }
    };
    Summary { model: a.model, trials: lines.len(), fitted, failed: lines.len() - fitted, heavy_tailed, csd }
}

pub fn run(a: &Args, global: &Global) -> Result<()> {
    let ts = TrialSet::read_dir(&a.input).with_context(|| format!("reading trial set {}", a.input.display()))?;
    let fits = fit_all(a, &ts)?;
    let lines = lines(&fits);
    meta::create_dir(&a.out)?;
    let path = a.out.join("posteriors.jsonl");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    for l in &lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let summary = summarize(a, &fits, &lines);
    meta::write_json(&a.out.join("fit.json"), &summary)?;
    meta::write_meta(&a.out, "fit", global, a)?;
    eprintln!("fitted {}/{} trials into {}", summary.fitted, summary.trials, a.out.display());
    Ok(())
}
