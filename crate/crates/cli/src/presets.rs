//! Embedded scenario presets reproducing the study configurations: the four
//! Bernoulli borrowing scenarios, the Poisson K-sweep, the non-monotone
//! Gaussian grid comparison, the regression scaling scenarios and the two
//! logistic-regression setups. All data are synthetic and derived from the
//! run seed, so a scenario is reproducible from its name and seed alone.

use crate::commands::{
    build_dictionary, build_grid, check_backend_supported, config_json, dictionary_metrics,
    provenance_for, sample_and_write, summary_out, write_exact_marginal,
};
use crate::config::{
    A0PriorConfig, ChainsConfig, DataConfig, Generator, GridConfig, ModelConfig,
    NormalisationMode, Resolved, RunConfig, CONFIG_VERSION,
};
use powerprior::conjugate::ConjugateConstants;
use powerprior::curvefit::{curve_metrics_fn, fit_l_curve, predict_dictionary};
use powerprior::grid::build_uniform_grid;
use powerprior::posterior::{a0_ks_distance, summarise, Normalisation};
use powerprior::{Error, Result};
use serde_json::json;
use std::path::Path;

/// Deterministic sub-seed for a component of a scenario.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const SCENARIO_NAMES: &[&str] = &[
    "bernoulli-1",
    "bernoulli-2",
    "bernoulli-3",
    "bernoulli-4",
    "poisson",
    "gaussian-m10",
    "linreg-main",
    "linreg-A",
    "linreg-B",
    "linreg-C",
    "linreg-D",
    "logistic-1",
    "logistic-2",
];

fn flat_prior() -> A0PriorConfig {
    A0PriorConfig { eta: 1.0, nu: 1.0, upper: 1.0 }
}

fn base_config(seed: u64, model: ModelConfig, historical: DataConfig, current: DataConfig) -> RunConfig {
    RunConfig {
        version: CONFIG_VERSION,
        seed,
        model,
        historical,
        current: Some(current),
        a0_prior: flat_prior(),
        grid: GridConfig::default(),
        k: 20_000,
        normalisation: NormalisationMode::Dictionary,
        dictionary_path: None,
        chains: ChainsConfig::default(),
        a0_list: Vec::new(),
        derivative_comparison: false,
    }
}

fn bernoulli_scenario(seed: u64, historical: (u64, u64), current: (u64, u64)) -> RunConfig {
    base_config(
        seed,
        ModelConfig::BetaBernoulli { c: 1.0, d: 1.0 },
        DataConfig::BernoulliCounts { successes: historical.0, trials: historical.1 },
        DataConfig::BernoulliCounts { successes: current.0, trials: current.1 },
    )
}

fn poisson_scenario(seed: u64) -> RunConfig {
    base_config(
        seed,
        ModelConfig::GammaPoisson { alpha0: 2.0, beta0: 2.0 },
        DataConfig::Generate(Generator::Poisson { n: 200, lambda: 2.0, seed: sub_seed(seed, 1) }),
        DataConfig::Generate(Generator::Poisson { n: 100, lambda: 2.0, seed: sub_seed(seed, 2) }),
    )
}

fn gaussian_scenario(seed: u64) -> RunConfig {
    let mut cfg = base_config(
        seed,
        ModelConfig::NormalGamma { mu0: 0.0, kappa0: 5.0, alpha0: 1.0, beta0: 1.0 },
        DataConfig::Generate(Generator::Gaussian {
            n: 50,
            mean: -0.1,
            sd: 1e-3,
            seed: sub_seed(seed, 1),
        }),
        DataConfig::Generate(Generator::Gaussian {
            n: 200,
            mean: -0.1,
            sd: 1e-3,
            seed: sub_seed(seed, 2),
        }),
    );
    cfg.grid.upper = 10.0;
    cfg
}

fn linreg_config(seed: u64, n0: usize, coefficients: Vec<f64>, n_current: usize) -> RunConfig {
    let p = coefficients.len();
    let lambda0: Vec<Vec<f64>> =
        (0..p).map(|i| (0..p).map(|j| if i == j { 1.5 } else { 0.0 }).collect()).collect();
    let mut cfg = base_config(
        seed,
        ModelConfig::NigRegression { mu0: vec![0.0; p], lambda0, alpha0: 0.5, gamma0: 2.0 },
        DataConfig::Generate(Generator::LinearRegression {
            n: n0,
            coefficients: coefficients.clone(),
            noise_sd: 2.0,
            seed: sub_seed(seed, 1),
        }),
        DataConfig::Generate(Generator::LinearRegression {
            n: n_current,
            coefficients,
            noise_sd: 2.0,
            seed: sub_seed(seed, 2),
        }),
    );
    // Exact conjugate draws are cheap; extra iterations tighten the bridge
    // estimates feeding the dictionary.
    cfg.chains = ChainsConfig { n_chains: 4, n_iter: 3000, n_warmup: 1000 };
    cfg
}

/// Coefficients for the scaling scenarios: a fixed ±1/∓0.5 pattern recycled
/// across dimensions, so every scenario has signal on every coordinate.
fn scaling_coefficients(p: usize) -> Vec<f64> {
    let pattern = [-1.0, 1.0, 0.5, -0.5, 0.25];
    (0..p).map(|i| pattern[i % pattern.len()]).collect()
}

fn logistic_config(seed: u64, intercept: f64, coefficients: Vec<f64>) -> RunConfig {
    let mut cfg = base_config(
        seed,
        ModelConfig::LogisticRegression { n_covariates: coefficients.len() },
        DataConfig::Generate(Generator::LogisticRegression {
            n: 1000,
            intercept,
            coefficients: coefficients.clone(),
            seed: sub_seed(seed, 1),
        }),
        DataConfig::Generate(Generator::LogisticRegression {
            n: 100,
            intercept,
            coefficients,
            seed: sub_seed(seed, 2),
        }),
    );
    // Random-walk chains on the 5-dimensional posterior need a longer run
    // than the conjugate defaults to clear the R-hat gate.
    cfg.chains = ChainsConfig { n_chains: 4, n_iter: 6000, n_warmup: 2000 };
    cfg
}

/// What a scenario runs beyond the shared grid/fit/sample pipeline.
enum Kind {
    BernoulliTable,
    PoissonSweep { ks: Vec<usize> },
    GaussianComparison,
    LinReg { true_beta: Vec<f64>, true_sigma2: f64, smoke: bool },
    Logistic { intercept: f64, coefficients: Vec<f64> },
}

struct Scenario {
    config: RunConfig,
    kind: Kind,
}

fn scenario(name: &str, seed: u64) -> Result<Scenario> {
    let s = match name {
        "bernoulli-1" => Scenario {
            config: bernoulli_scenario(seed, (20, 100), (20, 100)),
            kind: Kind::BernoulliTable,
        },
        "bernoulli-2" => Scenario {
            config: bernoulli_scenario(seed, (10, 100), (200, 1000)),
            kind: Kind::BernoulliTable,
        },
        "bernoulli-3" => Scenario {
            config: bernoulli_scenario(seed, (200, 1000), (200, 1000)),
            kind: Kind::BernoulliTable,
        },
        "bernoulli-4" => Scenario {
            config: bernoulli_scenario(seed, (100, 1000), (200, 1000)),
            kind: Kind::BernoulliTable,
        },
        "poisson" => Scenario {
            config: poisson_scenario(seed),
            kind: Kind::PoissonSweep { ks: vec![50, 1000, 20_000] },
        },
        "gaussian-m10" => Scenario { config: gaussian_scenario(seed), kind: Kind::GaussianComparison },
        "linreg-main" => Scenario {
            config: linreg_config(seed, 1000, vec![-1.0, 1.0, 0.5, -0.5], 100),
            kind: Kind::LinReg {
                true_beta: vec![-1.0, 1.0, 0.5, -0.5],
                true_sigma2: 4.0,
                smoke: false,
            },
        },
        "linreg-A" => Scenario {
            config: linreg_config(seed, 50, scaling_coefficients(5), 100),
            kind: Kind::LinReg { true_beta: scaling_coefficients(5), true_sigma2: 4.0, smoke: false },
        },
        "linreg-B" => Scenario {
            config: linreg_config(seed, 100, scaling_coefficients(10), 100),
            kind: Kind::LinReg { true_beta: scaling_coefficients(10), true_sigma2: 4.0, smoke: true },
        },
        "linreg-C" => Scenario {
            config: linreg_config(seed, 500, scaling_coefficients(50), 100),
            kind: Kind::LinReg { true_beta: scaling_coefficients(50), true_sigma2: 4.0, smoke: true },
        },
        "linreg-D" => Scenario {
            config: linreg_config(seed, 1000, scaling_coefficients(100), 100),
            kind: Kind::LinReg {
                true_beta: scaling_coefficients(100),
                true_sigma2: 4.0,
                smoke: true,
            },
        },
        "logistic-1" => Scenario {
            config: logistic_config(seed, 1.2, vec![-1.0, 1.0, 0.5, -0.5]),
            kind: Kind::Logistic { intercept: 1.2, coefficients: vec![-1.0, 1.0, 0.5, -0.5] },
        },
        "logistic-2" => Scenario {
            config: logistic_config(seed, 0.2, vec![-10.0, 1.0, 5.0, -5.0]),
            kind: Kind::Logistic { intercept: 0.2, coefficients: vec![-10.0, 1.0, 5.0, -5.0] },
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario `{other}`; available: {}",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    Ok(s)
}

/// The scenario's default config, resolvable by callers (used by tests).
pub fn scenario_config(name: &str, seed: u64) -> Result<RunConfig> {
    Ok(scenario(name, seed)?.config)
}

/// Run a named scenario end to end, emitting every intermediate artifact.
pub fn run_scenario(name: &str, seed: u64, out: &Path) -> Result<()> {
    let Scenario { config, kind } = scenario(name, seed)?;
    std::fs::create_dir_all(out)?;
    let resolved = config.resolve(out)?;
    check_backend_supported(&resolved)?;
    std::fs::write(out.join("resolved-config.json"), config_json(&resolved) + "\n")?;
    let prov = provenance_for(&resolved);

    match kind {
        Kind::BernoulliTable => run_bernoulli_table(name, &resolved, &prov, out),
        Kind::PoissonSweep { ks } => run_poisson_sweep(name, &resolved, &prov, out, &ks),
        Kind::GaussianComparison => run_gaussian_comparison(name, &resolved, &prov, out),
        Kind::LinReg { true_beta, true_sigma2, smoke } => {
            run_linreg(name, &resolved, &prov, out, &true_beta, true_sigma2, smoke)
        }
        Kind::Logistic { intercept, coefficients } => {
            run_logistic(name, &resolved, &prov, out, intercept, &coefficients)
        }
    }
}

fn run_bernoulli_table(
    name: &str,
    resolved: &Resolved,
    prov: &crate::provenance::Provenance,
    out: &Path,
) -> Result<()> {
    let grid = build_grid(resolved)?;
    crate::commands::write_grid_files(prov, resolved, &grid, out)?;
    let dict = build_dictionary(resolved, &grid)?;
    prov.write_csv(&out.join("dictionary.csv"), |buf| dict.to_csv(buf))?;

    let constants = ConjugateConstants::new(&resolved.model, &resolved.historical)?;
    let marginal = write_exact_marginal(resolved, 8001, prov, out)?;

    let none = sample_and_write(resolved, Normalisation::None, "none", prov, out)?;
    let exact = sample_and_write(resolved, Normalisation::Exact(&constants), "exact", prov, out)?;
    let approx =
        sample_and_write(resolved, Normalisation::Dictionary(&dict), "approximate", prov, out)?;

    let metrics =
        dictionary_metrics(&dict, &constants, (resolved.config.grid.m, resolved.config.grid.upper));
    let report = json!({
        "scenario": name,
        "table": {
            "unnormalised": summary_out(&none, "none").parameters,
            "normalised": summary_out(&exact, "exact").parameters,
            "approx_normalised": summary_out(&approx, "approximate").parameters,
        },
        "exact_marginal": { "mean": marginal.mean(),
                             "lower": marginal.quantile(0.025),
                             "upper": marginal.quantile(0.975) },
        "ks_distance": {
            "exact": a0_ks_distance(&exact, &marginal),
            "approximate": a0_ks_distance(&approx, &marginal),
        },
        "dictionary_metrics": { "mad": metrics.mad, "rmse": metrics.rmse, "mrae": metrics.mrae },
    });
    prov.write_json(&out.join("report.json"), &report)
}

fn run_poisson_sweep(
    name: &str,
    resolved: &Resolved,
    prov: &crate::provenance::Provenance,
    out: &Path,
    ks: &[usize],
) -> Result<()> {
    let grid = build_grid(resolved)?;
    crate::commands::write_grid_files(prov, resolved, &grid, out)?;
    let fit = fit_l_curve(&grid)?;
    let constants = ConjugateConstants::new(&resolved.model, &resolved.historical)?;
    let marginal = write_exact_marginal(resolved, 8001, prov, out)?;

    let none = sample_and_write(resolved, Normalisation::None, "none", prov, out)?;
    let exact = sample_and_write(resolved, Normalisation::Exact(&constants), "exact", prov, out)?;

    let mut sweep = Vec::new();
    for &k in ks {
        let dict = predict_dictionary(&fit, k, resolved.config.grid.upper)?;
        prov.write_csv(&out.join(format!("dictionary-k{k}.csv")), |buf| dict.to_csv(buf))?;
        let label = format!("approximate-k{k}");
        let draws =
            sample_and_write(resolved, Normalisation::Dictionary(&dict), &label, prov, out)?;
        let metrics =
        dictionary_metrics(&dict, &constants, (resolved.config.grid.m, resolved.config.grid.upper));
        sweep.push(json!({
            "k": k,
            "ks_distance": a0_ks_distance(&draws, &marginal),
            "lambda_mean": summarise(&draws)[0].mean,
            "a0_mean": summarise(&draws)[1].mean,
            "dictionary_rmse": metrics.rmse,
        }));
    }
    let report = json!({
        "scenario": name,
        "unnormalised_a0_mean": summarise(&none)[1].mean,
        "exact_ks": a0_ks_distance(&exact, &marginal),
        "sweep": sweep,
    });
    prov.write_json(&out.join("report.json"), &report)
}

fn run_gaussian_comparison(
    name: &str,
    resolved: &Resolved,
    prov: &crate::provenance::Provenance,
    out: &Path,
) -> Result<()> {
    let budget = resolved.config.grid.budget();
    let eval = crate::commands::make_evaluator(resolved)?;
    let adaptive = powerprior::grid::build_adaptive_grid(eval.as_ref(), &budget, false)?;
    let uniform = build_uniform_grid(eval.as_ref(), &budget)?;
    prov.write_csv(&out.join("grid-adaptive.csv"), |buf| adaptive.to_csv(buf))?;
    prov.write_csv(&out.join("grid-uniform.csv"), |buf| uniform.to_csv(buf))?;

    let constants = ConjugateConstants::new(&resolved.model, &resolved.historical)?;
    let k = resolved.config.k;
    let upper = resolved.config.grid.upper;
    let dict_adaptive = predict_dictionary(&fit_l_curve(&adaptive)?, k, upper)?;
    let dict_uniform = predict_dictionary(&fit_l_curve(&uniform)?, k, upper)?;
    prov.write_csv(&out.join("dictionary-adaptive.csv"), |buf| dict_adaptive.to_csv(buf))?;
    prov.write_csv(&out.join("dictionary-uniform.csv"), |buf| dict_uniform.to_csv(buf))?;

    let on = |dict: &powerprior::curvefit::Dictionary, hi: f64| {
        let m = curve_metrics_fn(dict, |a| constants.log_c(a), (0.0, hi));
        json!({ "mad": m.mad, "rmse": m.rmse })
    };
    let report = json!({
        "scenario": name,
        "mode_adaptive": match adaptive.mode {
            powerprior::grid::GridMode::Bisection => "bisection",
            powerprior::grid::GridMode::Uniform => "uniform",
        },
        "restricted_to_unit_interval": { "adaptive": on(&dict_adaptive, 1.0), "uniform": on(&dict_uniform, 1.0) },
        "full_range": { "adaptive": on(&dict_adaptive, upper), "uniform": on(&dict_uniform, upper) },
    });
    prov.write_json(&out.join("report.json"), &report)
}

#[allow(clippy::too_many_arguments)]
fn run_linreg(
    name: &str,
    resolved: &Resolved,
    prov: &crate::provenance::Provenance,
    out: &Path,
    true_beta: &[f64],
    true_sigma2: f64,
    smoke: bool,
) -> Result<()> {
    let grid = build_grid(resolved)?;
    crate::commands::write_grid_files(prov, resolved, &grid, out)?;
    let dict = build_dictionary(resolved, &grid)?;
    prov.write_csv(&out.join("dictionary.csv"), |buf| dict.to_csv(buf))?;
    let constants = ConjugateConstants::new(&resolved.model, &resolved.historical)?;
    let metrics =
        dictionary_metrics(&dict, &constants, (resolved.config.grid.m, resolved.config.grid.upper));

    let none = sample_and_write(resolved, Normalisation::None, "none", prov, out)?;
    let approx =
        sample_and_write(resolved, Normalisation::Dictionary(&dict), "approximate", prov, out)?;
    let exact = if smoke {
        None
    } else {
        Some(sample_and_write(resolved, Normalisation::Exact(&constants), "exact", prov, out)?)
    };

    let p = true_beta.len();
    let coef_report = |draws: &powerprior::posterior::JointDraws| {
        let summaries = summarise(draws);
        let mut width = 0.0;
        let mut inclusion = 0usize;
        let mut mse = 0.0;
        for (i, truth) in true_beta.iter().enumerate() {
            let s = &summaries[i];
            width += s.upper - s.lower;
            if (s.lower..=s.upper).contains(truth) {
                inclusion += 1;
            }
            mse += (s.mean - truth) * (s.mean - truth);
        }
        json!({
            "ci_width_mean": width / p as f64,
            "inclusion": inclusion as f64 / p as f64,
            "mse_beta": mse / p as f64,
            "sigma2": { "mean": summaries[p].mean, "lower": summaries[p].lower, "upper": summaries[p].upper },
            "a0_mean": summaries[p + 1].mean,
        })
    };
    let report = json!({
        "scenario": name,
        "true_sigma2": true_sigma2,
        "mrae": metrics.mrae,
        "unnormalised": coef_report(&none),
        "approx_normalised": coef_report(&approx),
        "exact_normalised": exact.as_ref().map(coef_report),
        "approx_vs_exact_coef_gap": exact.as_ref().map(|e| {
            let sa = summarise(&approx);
            let se = summarise(e);
            (0..p).map(|i| (sa[i].mean - se[i].mean).abs()).fold(0.0f64, f64::max)
        }),
    });
    prov.write_json(&out.join("report.json"), &report)
}

fn run_logistic(
    name: &str,
    resolved: &Resolved,
    prov: &crate::provenance::Provenance,
    out: &Path,
    intercept: f64,
    coefficients: &[f64],
) -> Result<()> {
    let grid = build_grid(resolved)?;
    crate::commands::write_grid_files(prov, resolved, &grid, out)?;
    let dict = build_dictionary(resolved, &grid)?;
    prov.write_csv(&out.join("dictionary.csv"), |buf| dict.to_csv(buf))?;

    let none = sample_and_write(resolved, Normalisation::None, "none", prov, out)?;
    let approx =
        sample_and_write(resolved, Normalisation::Dictionary(&dict), "approximate", prov, out)?;

    let mut truth = vec![intercept];
    truth.extend_from_slice(coefficients);
    let coverage = |draws: &powerprior::posterior::JointDraws| {
        let summaries = summarise(draws);
        let mut covered = 0usize;
        let mut width = 0.0;
        for (s, t) in summaries.iter().zip(&truth) {
            if (s.lower..=s.upper).contains(t) {
                covered += 1;
            }
            width += s.upper - s.lower;
        }
        json!({
            "covered": covered,
            "of": truth.len(),
            "ci_width_mean": width / truth.len() as f64,
            "a0_mean": summaries.last().expect("a0 row").mean,
        })
    };
    let report = json!({
        "scenario": name,
        "true_parameters": truth,
        "unnormalised": coverage(&none),
        "approx_normalised": coverage(&approx),
    });
    prov.write_json(&out.join("report.json"), &report)
}
