use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use dmri_uq::calibrate::{bias_corrected_pp, default_p_grid, pp_curve, PPCurve, QuantityPosterior};
use dmri_uq::experiment::{
    angle_bootstrap_posterior, angle_posterior, dti_bootstrap_posterior, dti_quantity_posterior, PosteriorOptions,
    Quantity, TrialPosterior,
};
use dmri_uq::par;
use dmri_uq::phantom::TrialSet;
use dmri_uq::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::commands::fit::{self, Fits, Model};
use crate::meta::{self, Global};
use crate::{svg, usage};

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantityArg {
    Md,
    Fa,
    Rtop,
    Angle,
}

impl QuantityArg {
    fn name(self) -> &'static str {
        match self {
            QuantityArg::Md => "md",
            QuantityArg::Fa => "fa",
            QuantityArg::Rtop => "rtop",
            QuantityArg::Angle => "angle",
        }
    }

    fn quantity(self) -> Quantity {
        match self {
            QuantityArg::Md => Quantity::Md,
            QuantityArg::Fa => Quantity::Fa,
            QuantityArg::Rtop => Quantity::Rtop,
            QuantityArg::Angle => Quantity::Angle,
        }
    }
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Args {
    #[arg(value_enum)]
    pub quantity: QuantityArg,

    /// Directory written by `fit`.
    #[arg(long)]
    pub fits: PathBuf,

    /// Trial set; defaults to the one recorded by `fit`.
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    /// Posterior draws per trial for sampled quantities.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,

    /// Subtract the average error of the posterior means before comparing.
    #[arg(long)]
    pub bias_correct: bool,

    /// Add the residual-bootstrap curve.
    #[arg(long)]
    pub bootstrap: bool,
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    trials_used: usize,
    /// Trials without a fit or without a usable posterior.
    trials_excluded: usize,
    /// Draws that produced no value, summed over trials.
    draws_dropped: usize,
    bias: Option<f64>,
    sup_deviation: f64,
    sup_deviation_inner: f64,
    fraction_in_band: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    quantity: QuantityArg,
    truth: f64,
    draws: usize,
    bias_corrected: bool,
    bayes: CurveSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<CurveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sup_distance_bayes_bootstrap: Option<f64>,
}

/// The fit configuration recorded in `<fits>/meta.json`.
fn fit_config(a: &Args) -> Result<fit::Args> {
    let path = a.fits.join("meta.json");
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
    if value.get("command").and_then(|c| c.as_str()) != Some("fit") {
        bail!("{} was not written by `fit`", path.display());
    }
    let config = value.get("config").cloned().context("meta.json has no config")?;
    serde_json::from_value(config).with_context(|| format!("parsing fit config in {}", path.display()))
}

/// Refits the trials and checks the result against the stored posterior records.
fn verified_fits(cfg: &fit::Args, a: &Args, ts: &TrialSet) -> Result<Fits> {
    let fits = fit::fit_all(cfg, ts)?;
    let lines = fit::read_lines(&a.fits.join("posteriors.jsonl"))?;
    if lines.len() != ts.trials() {
        bail!("{} posterior records for {} trials", lines.len(), ts.trials());
    }
    for (t, line) in lines.iter().enumerate() {
        let stored = line.posterior.as_ref().map(|r| &r.mean);
        let refit = fits.posterior(t).map(|p| p.mean().as_slice());
        if line.trial != t || stored.map(Vec::as_slice) != refit {
            bail!("posterior record of trial {t} does not match the trial set; rerun `fit`");
        }
    }
    Ok(fits)
}

/// Usable posteriors, excluded trials, dropped draws and the first error.
struct Collected {
    posts: Vec<QuantityPosterior>,
    excluded: usize,
    dropped: usize,
    first_error: Option<dmri_uq::Error>,
}

fn posteriors<F>(n: usize, f: F) -> Collected
where
    F: Fn(usize) -> Option<dmri_uq::Result<TrialPosterior>> + Sync + Send,
{
    let mut c = Collected { posts: Vec::new(), excluded: 0, dropped: 0, first_error: None };
    for r in par::map_indexed(n, f) {
        match r {
            Some(Ok(tp)) => {
                c.dropped += tp.dropped;
                c.posts.extend(tp.posterior);
            }
            Some(Err(e)) => {
                c.first_error.get_or_insert(e);
            }
            None => {}
        }
    }
    c.excluded = n - c.posts.len();
    c
}

fn curve(c: Collected, truth: f64, bias_correct: bool) -> Result<(PPCurve, CurveSummary)> {
    let Collected { posts, excluded, dropped, first_error } = c;
    if let (true, Some(e)) = (posts.is_empty(), first_error) {
        return Err(anyhow::Error::new(e).context("no trial produced a posterior"));
    }
    let posts = &posts[..];
    let grid = default_p_grid();
    let (c, bias) = if bias_correct {
        let (c, b) = bias_corrected_pp(posts, truth, &grid)?;
        (c, Some(b))
    } else {
        (pp_curve(posts, truth, &grid)?, None)
    };
    let s = CurveSummary {
        trials_used: posts.len(),
        trials_excluded: excluded,
        draws_dropped: dropped,
        bias,
        sup_deviation: c.sup_deviation(),
        sup_deviation_inner: c.sup_deviation_within(0.05, 0.95),
        fraction_in_band: c.fraction_in_band(),
    };
    Ok((c, s))
}

pub fn run(a: &Args, global: &Global) -> Result<()> {
    if a.draws < 2 {
        return Err(usage(format!("--draws {} is too few to estimate quantiles; use at least 2", a.draws)));
    }
    let cfg = fit_config(a)?;
    let q = a.quantity.quantity();
    match (cfg.model, q) {
        (Model::Csd, Quantity::Angle) | (Model::Dti, Quantity::Md | Quantity::Fa | Quantity::Rtop) => {}
        (m, _) => {
            let m = if m == Model::Dti { "dti" } else { "csd" };
            return Err(usage(format!(
                "{} cannot be computed from the {m} fits in {}",
                a.quantity.name(),
                a.fits.display()
            )));
        }
    }
    let input = a.input.clone().unwrap_or_else(|| cfg.input.clone());
    let ts = TrialSet::read_dir(&input).with_context(|| format!("reading trial set {}", input.display()))?;
    let truth = match q {
        Quantity::Md => ts.truth.md,
        Quantity::Fa => ts.truth.fa,
        Quantity::Rtop => ts.truth.rtop,
        Quantity::Angle => ts.truth.crossing_angle,
    }
    .with_context(|| format!("the trial set has no true {}", a.quantity.name()))?;
    let fits = verified_fits(&cfg, a, &ts)?;

    let opts = PosteriorOptions { draws: a.draws, seed: global.seed, diffusion_time: ts.scheme.diffusion_time() };
    let boot_opts = PosteriorOptions { seed: derive_seed(global.seed, u64::MAX), ..opts };
    let n = ts.trials();
    let (bayes, boot) = match &fits {
        Fits::Dti(f) => {
            let bayes = posteriors(n, |t| f[t].as_ref().ok().map(|fit| dti_quantity_posterior(fit, q, &opts, t)));
            let boot = a.bootstrap.then(|| {
                posteriors(n, |t| f[t].as_ref().ok().map(|fit| dti_bootstrap_posterior(fit, q, &boot_opts, t)))
            });
            (bayes, boot)
        }
        Fits::Csd(setup, f) => {
            let finder = &setup.finder;
            let bayes = posteriors(n, |t| f[t].as_ref().ok().map(|fit| angle_posterior(fit, finder, &opts, t)));
            let boot = a.bootstrap.then(|| {
                posteriors(n, |t| f[t].as_ref().ok().map(|fit| angle_bootstrap_posterior(fit, finder, &boot_opts, t)))
            });
            (bayes, boot)
        }
    };

    meta::create_dir(&a.out)?;
    if bayes.posts.is_empty() {
        if let Some(e) = fits.into_first_error() {
            return Err(anyhow::Error::new(e).context("no trial could be fitted"));
        }
    }
    let (bayes_curve, bayes_summary) = curve(bayes, truth, a.bias_correct)?;
    bayes_curve.write_csv(&a.out.join("bayes.csv"))?;
    let mut plotted = vec![("Bayesian", &bayes_curve)];
    let boot = match boot {
        Some(c) => Some(curve(c, truth, a.bias_correct)?),
        None => None,
    };
    let mut distance = None;
    if let Some((c, _)) = &boot {
        c.write_csv(&a.out.join("bootstrap.csv"))?;
        distance = Some(bayes_curve.sup_distance(c)?);
        plotted.push(("bootstrap", c));
    }
    let title = format!("P-P plot: {}{}", a.quantity.name(), if a.bias_correct { " (bias corrected)" } else { "" });
    fs::write(a.out.join("pp.svg"), svg::pp_plot(&title, &plotted))?;
    let summary = Summary {
        quantity: a.quantity,
        truth,
        draws: a.draws,
        bias_corrected: a.bias_correct,
        sup_distance_bayes_bootstrap: distance,
        bayes: bayes_summary,
        bootstrap: boot.map(|(_, s)| s),
    };
    meta::write_json(&a.out.join("summary.json"), &summary)?;
    meta::write_meta(&a.out, "pp", global, a)?;
    eprintln!(
        "{}: sup |coverage − p| = {:.4} over {} trials",
        a.quantity.name(),
        summary.bayes.sup_deviation,
        summary.bayes.trials_used
    );
    Ok(())
}
