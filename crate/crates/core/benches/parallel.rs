//! Parallel against sequential maps over Monte Carlo trials.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmri_uq::dmri::{dti_fit_wls, fa_posterior_samples, Weighting};
use dmri_uq::par::{map_indexed, map_indexed_seq};
use dmri_uq::phantom::{connectome_scheme, NoiseSpec, Phantom, TrialSet};

fn trial_set(trials: usize) -> (dmri_uq::dmri::AcquisitionScheme, Vec<Vec<f64>>) {
    let full = connectome_scheme();
    let idx = full.indices_up_to(1000.0);
    let scheme = full.subset(&idx).unwrap();
    let phantom = Phantom::single(0.7e-3, 0.8, 1.0).unwrap();
    let ts = TrialSet::simulate(&phantom, &scheme, NoiseSpec::rician(0.05).unwrap(), trials, 7).unwrap();
    let signals = (0..trials).map(|t| ts.trial(t)).collect();
    (scheme, signals)
}

fn dti_fits(c: &mut Criterion) {
    let (scheme, signals) = trial_set(500);
    let mut g = c.benchmark_group("dti_fit_500_trials");
    g.sample_size(20);
    g.bench_function(BenchmarkId::new("map", "parallel"), |b| {
        b.iter(|| {
            map_indexed(signals.len(), |t| dti_fit_wls(&scheme, black_box(&signals[t]), Weighting::Fitted).unwrap())
        })
    });
    g.bench_function(BenchmarkId::new("map", "sequential"), |b| {
        b.iter(|| {
            map_indexed_seq(signals.len(), |t| dti_fit_wls(&scheme, black_box(&signals[t]), Weighting::Fitted).unwrap())
        })
    });
    g.finish();
}

fn fa_sampling(c: &mut Criterion) {
    let (scheme, signals) = trial_set(100);
    let fits: Vec<_> = signals.iter().map(|s| dti_fit_wls(&scheme, s, Weighting::Fitted).unwrap()).collect();
    let mut g = c.benchmark_group("fa_posterior_100_trials_x_1000_draws");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("map", "parallel"), |b| {
        b.iter(|| map_indexed(fits.len(), |t| fa_posterior_samples(&fits[t], 1000, t as u64).unwrap()))
    });
    g.bench_function(BenchmarkId::new("map", "sequential"), |b| {
        b.iter(|| map_indexed_seq(fits.len(), |t| fa_posterior_samples(&fits[t], 1000, t as u64).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, dti_fits, fa_sampling);
criterion_main!(benches);
