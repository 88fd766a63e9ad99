//! Benchmarks for the pipeline's hot pieces: closed-form constants, the
//! quadrature oracle, power-posterior sampling plus bridging, the grid
//! builder and the spline dictionary.

use criterion::{criterion_group, criterion_main, Criterion};
use powerprior::bridge::{bridge_log_c, BridgeConfig};
use powerprior::conjugate::{bern_log_c, ConjugateConstants};
use powerprior::curvefit::{fit_l_curve, lookup_l, predict_dictionary};
use powerprior::grid::{build_adaptive_grid, ClosedFormEvaluator, GridBudget};
use powerprior::mcmc::{chain_rng, sample_power_posterior, ChainConfig};
use powerprior::posterior::{sample_joint, Normalisation};
use powerprior::quad::{quad_log_c_1d, QuadratureConfig};
use powerprior::{A0Prior, PowerPriorTarget};
use powerprior_bench::bernoulli_fixture;
use std::hint::black_box;

fn bench_closed_form(c: &mut Criterion) {
    c.bench_function("bern_log_c", |b| {
        b.iter(|| bern_log_c(black_box(0.37), 20.0, 100.0, 1.0, 1.0).unwrap())
    });
}

fn bench_quadrature(c: &mut Criterion) {
    let (model, d0, _) = bernoulli_fixture();
    let cfg = QuadratureConfig::default();
    c.bench_function("quad_log_c_1d_bernoulli", |b| {
        b.iter(|| quad_log_c_1d(&model, &d0, black_box(0.37), &cfg).unwrap())
    });
}

fn bench_sampling_and_bridge(c: &mut Criterion) {
    let (model, d0, _) = bernoulli_fixture();
    let cfg = ChainConfig::with_seed(1);
    c.bench_function("sample_power_posterior_bernoulli", |b| {
        b.iter(|| {
            let target = PowerPriorTarget::new(&model, &d0, 0.5, None).unwrap();
            sample_power_posterior(&target, &cfg).unwrap()
        })
    });
    let target = PowerPriorTarget::new(&model, &d0, 0.5, None).unwrap();
    let draws = sample_power_posterior(&target, &cfg).unwrap();
    c.bench_function("bridge_log_c_bernoulli", |b| {
        b.iter(|| {
            let mut rng = chain_rng(2, 9);
            bridge_log_c(&target, &draws, &BridgeConfig::default(), &mut rng).unwrap()
        })
    });
}

fn bench_grid_and_dictionary(c: &mut Criterion) {
    let (model, d0, d) = bernoulli_fixture();
    let eval = ClosedFormEvaluator::new(&model, &d0).unwrap();
    c.bench_function("build_adaptive_grid_closed_form", |b| {
        b.iter(|| build_adaptive_grid(&eval, &GridBudget::default(), true).unwrap())
    });
    let grid = build_adaptive_grid(&eval, &GridBudget::default(), true).unwrap();
    c.bench_function("fit_and_predict_dictionary_k20000", |b| {
        b.iter(|| predict_dictionary(&fit_l_curve(&grid).unwrap(), 20_000, 1.0).unwrap())
    });
    let dict = predict_dictionary(&fit_l_curve(&grid).unwrap(), 20_000, 1.0).unwrap();
    c.bench_function("dictionary_lookup", |b| {
        b.iter(|| lookup_l(&dict, black_box(0.314159)).unwrap())
    });
    let prior = A0Prior::flat();
    let constants = ConjugateConstants::new(&model, &d0).unwrap();
    let chain_cfg = ChainConfig::with_seed(3);
    c.bench_function("sample_joint_exact_bernoulli", |b| {
        b.iter(|| {
            sample_joint(&model, &d0, &d, &prior, Normalisation::Exact(&constants), &chain_cfg)
                .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_closed_form,
    bench_quadrature,
    bench_sampling_and_bridge,
    bench_grid_and_dictionary
);
criterion_main!(benches);
