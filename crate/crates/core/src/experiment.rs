//! Simulation pipelines shared by the command line tool and the test suite:
//! fit every trial of a [`TrialSet`] and turn the fits into per-trial
//! posteriors of a derived quantity.

use serde::{Deserialize, Serialize};

use crate::calibrate::{residual_bootstrap, QuantityPosterior};
use crate::dmri::{
    angle_posterior_samples, csd_fit, dti_fit_wls, fa_of_tensor, fa_posterior_samples, md_posterior,
    response_from_tensor, rtop_of_tensor, rtop_posterior_samples, AcquisitionScheme, CsdModel, CsdParams,
    DiffusionTensor, DtiFit, PeakFinder, PeakParams, ShFit, Weighting,
};
use crate::error::{Error, Result};
use crate::par;
use crate::phantom::TrialSet;
use crate::rng::derive_seed;

/// Scalar quantities with a known truth in the phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Md,
    Fa,
    Rtop,
    Angle,
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" => Ok(Quantity::Md),
            "fa" => Ok(Quantity::Fa),
            "rtop" => Ok(Quantity::Rtop),
            "angle" => Ok(Quantity::Angle),
            _ => Err(Error::InvalidInput(format!("unknown quantity {s:?}"))),
        }
    }
}

/// The scheme and trial signals restricted to `indices`.
pub fn restrict(ts: &TrialSet, indices: &[usize]) -> Result<(AcquisitionScheme, Vec<Vec<f64>>)> {
    let scheme = ts.scheme.subset(indices)?;
    let signals = (0..ts.trials()).map(|t| indices.iter().map(|&j| ts.noisy[(t, j)]).collect()).collect();
    Ok((scheme, signals))
}

/// DTI fit of every trial on `b ≤ bmax`.
pub fn fit_dti_trials(ts: &TrialSet, bmax: f64, weighting: Weighting) -> Result<Vec<Result<DtiFit>>> {
    let (scheme, signals) = restrict(ts, &ts.scheme.indices_up_to(bmax))?;
    Ok(par::map_slice(&signals, |s| dti_fit_wls(&scheme, s, weighting)))
}

/// Operators for fitting the `shell_bval` shell of a trial set by CSD with
/// the response of `response_tensor`.
#[derive(Debug, Clone)]
pub struct CsdSetup {
    pub model: CsdModel,
    pub finder: PeakFinder,
    pub indices: Vec<usize>,
}

impl CsdSetup {
    pub fn new(
        scheme: &AcquisitionScheme,
        shell_bval: f64,
        response_tensor: &DiffusionTensor,
        s0: f64,
        params: CsdParams,
        peaks: PeakParams,
    ) -> Result<Self> {
        let indices = scheme.indices_of_shell(shell_bval);
        if indices.is_empty() {
            return Err(Error::InvalidInput(format!("no measurements on the b = {shell_bval} shell")));
        }
        let shell = scheme.subset(&indices)?;
        let response = response_from_tensor(response_tensor, shell_bval, params.order)?.scaled(s0);
        let model = CsdModel::new(&shell, &response, params)?;
        let finder = PeakFinder::new(model.grid().clone(), params.order, peaks)?;
        Ok(CsdSetup { model, finder, indices })
    }

    pub fn fit(&self, signal: &[f64]) -> Result<ShFit> {
        let s: Vec<f64> = self.indices.iter().map(|&j| signal[j]).collect();
        csd_fit(&self.model, &s)
    }
}

/// The response tensor of a trial set: its first phantom compartment.
pub fn phantom_response(ts: &TrialSet) -> (DiffusionTensor, f64) {
    (ts.meta.phantom.components()[0].tensor, ts.meta.phantom.s0())
}

pub fn fit_csd_trials(ts: &TrialSet, setup: &CsdSetup) -> Vec<Result<ShFit>> {
    par::map_indexed(ts.trials(), |t| setup.fit(&ts.trial(t)))
}

/// Detection rate and mean of the crossing angle over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub trials: usize,
    pub detected: usize,
    pub mean_angle: Option<f64>,
    pub angles: Vec<Option<f64>>,
}

impl CrossingSummary {
    pub fn detection_rate(&self) -> f64 {
        self.detected as f64 / self.trials as f64
    }
}

/// Crossing angle of the posterior-mean fODF of every trial; failed fits
/// count as undetected.
pub fn crossing_summary(ts: &TrialSet, setup: &CsdSetup) -> CrossingSummary {
    let angles: Vec<Option<f64>> = par::map_indexed(ts.trials(), |t| {
        setup.fit(&ts.trial(t)).ok().and_then(|f| setup.finder.angle(f.posterior.mean()))
    });
    let found: Vec<f64> = angles.iter().flatten().copied().collect();
    let mean_angle = (!found.is_empty()).then(|| found.iter().sum::<f64>() / found.len() as f64);
    CrossingSummary { trials: angles.len(), detected: found.len(), mean_angle, angles }
}

/// How per-trial posteriors of a quantity are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorOptions {
    /// Draws for sampled quantities.
    pub draws: usize,
    pub seed: u64,
    /// Diffusion time for RTOP.
    pub diffusion_time: Option<f64>,
}

/// Outcome of forming the posterior of one trial.
#[derive(Debug, Clone)]
pub struct TrialPosterior {
    pub posterior: Option<QuantityPosterior>,
    /// Draws that produced no value (rejected tensors, undetected peaks).
    pub dropped: usize,
}

fn require_draws(draws: usize) -> Result<()> {
    if draws < 2 {
        return Err(Error::InvalidInput(format!("{draws} draws are not enough to estimate quantiles")));
    }
    Ok(())
}

/// Bayesian posterior of `quantity` for one DTI fit; closed form for MD.
pub fn dti_quantity_posterior(
    fit: &DtiFit,
    quantity: Quantity,
    opts: &PosteriorOptions,
    trial: usize,
) -> Result<TrialPosterior> {
    let seed = derive_seed(opts.seed, trial as u64);
    match quantity {
        Quantity::Md => {
            Ok(TrialPosterior { posterior: Some(QuantityPosterior::ClosedForm(md_posterior(fit)?)), dropped: 0 })
        }
        Quantity::Fa => {
            require_draws(opts.draws)?;
            let s = fa_posterior_samples(fit, opts.draws, seed)?;
            Ok(TrialPosterior { posterior: Some(QuantityPosterior::empirical(s.samples)?), dropped: 0 })
        }
        Quantity::Rtop => {
            require_draws(opts.draws)?;
            let t_d = opts.diffusion_time.ok_or_else(|| Error::InvalidInput("RTOP needs a diffusion time".into()))?;
            let s = rtop_posterior_samples(fit, t_d, opts.draws, seed)?;
            let dropped = s.rejected;
            let posterior = if s.is_unreliable() { None } else { Some(QuantityPosterior::empirical(s.samples)?) };
            Ok(TrialPosterior { posterior, dropped })
        }
        Quantity::Angle => Err(Error::InvalidInput("the crossing angle needs a CSD fit".into())),
    }
}

/// Sampled crossing-angle posterior of one CSD fit.
pub fn angle_posterior(
    fit: &ShFit,
    finder: &PeakFinder,
    opts: &PosteriorOptions,
    trial: usize,
) -> Result<TrialPosterior> {
    require_draws(opts.draws)?;
    let s = angle_posterior_samples(fit, finder, opts.draws, derive_seed(opts.seed, trial as u64))?;
    let posterior = if s.samples.len() < 2 { None } else { Some(QuantityPosterior::empirical(s.samples)?) };
    Ok(TrialPosterior { posterior, dropped: s.undetected })
}

fn dti_statistic(
    quantity: Quantity,
    diffusion_time: Option<f64>,
) -> impl Fn(&nalgebra::DVector<f64>) -> Option<f64> + Sync + Send {
    move |c| {
        let d = DiffusionTensor { xx: c[1], yy: c[2], zz: c[3], xy: c[4], xz: c[5], yz: c[6] };
        match quantity {
            Quantity::Md => Some(d.mean_diffusivity()),
            Quantity::Fa => Some(fa_of_tensor(&d)),
            Quantity::Rtop => rtop_of_tensor(&d, diffusion_time?).ok(),
            Quantity::Angle => None,
        }
    }
}

/// Residual-bootstrap distribution of `quantity` for one DTI fit.
pub fn dti_bootstrap_posterior(
    fit: &DtiFit,
    quantity: Quantity,
    opts: &PosteriorOptions,
    trial: usize,
) -> Result<TrialPosterior> {
    require_draws(opts.draws)?;
    let b = residual_bootstrap(
        &fit.system,
        &fit.posterior,
        dti_statistic(quantity, opts.diffusion_time),
        opts.draws,
        derive_seed(opts.seed, trial as u64),
    )?;
    let posterior =
        if b.is_flagged() || b.samples.len() < 2 { None } else { Some(QuantityPosterior::empirical(b.samples)?) };
    Ok(TrialPosterior { posterior, dropped: b.failures })
}

/// Residual-bootstrap distribution of the crossing angle for one CSD fit.
pub fn angle_bootstrap_posterior(
    fit: &ShFit,
    finder: &PeakFinder,
    opts: &PosteriorOptions,
    trial: usize,
) -> Result<TrialPosterior> {
    require_draws(opts.draws)?;
    let b = residual_bootstrap(
        &fit.system,
        &fit.posterior,
        |c| finder.angle(c),
        opts.draws,
        derive_seed(opts.seed, trial as u64),
    )?;
    let posterior = if b.samples.len() < 2 { None } else { Some(QuantityPosterior::empirical(b.samples)?) };
    Ok(TrialPosterior { posterior, dropped: b.failures })
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd / n.sqrt())
}
