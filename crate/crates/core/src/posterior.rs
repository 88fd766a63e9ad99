//! Joint posterior of (θ, a0) and its consumers.
//!
//! The sampler is Metropolis-within-Gibbs: the θ-block draws from the exact
//! conjugate conditional where one exists (random walk for logistic
//! regression), and the a0-block random-walks the logit of a0/M with a
//! Metropolis correction whose target includes −l(a0) from the selected
//! normalisation: nothing, the closed form, or a dictionary lookup. Exact
//! quadrature marginals of a0 and fixed-a0 sensitivity analyses live here
//! too.

use crate::a0prior::A0Prior;
use crate::conjugate::{exact_conditional_sample, ConjugateConstants};
use crate::curvefit::{lookup_l, Dictionary};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{logit, sigmoid};
use crate::mcmc::{
    chain_rng, run_gated, sample_power_posterior, ChainConfig, ChainOutput,
    Diagnostics,
};
use crate::model::{
    log_likelihood, log_power_density, Family, ModelSpec, PowerPriorTarget, ThetaPoint,
};
use crate::quad::{normalise_density_on_interval, DensityTable};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// How the a0-block accounts for the normalising constant.
#[derive(Clone, Copy)]
pub enum Normalisation<'a> {
    /// Unnormalised power prior: c(a0) dropped entirely.
    None,
    /// Closed-form l(a0); conjugate families only.
    Exact(&'a ConjugateConstants),
    /// Interpolated l̂(a0) from a prediction dictionary.
    Dictionary(&'a Dictionary),
}

/// Tag recorded on draws, identifying the normalisation used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalisationTag {
    None,
    Exact,
    Approximate { dictionary_size: usize },
}

/// Posterior draws of (θ, a0) with diagnostics over all components.
#[derive(Debug, Clone)]
pub struct JointDraws {
    /// Per chain: kept × q matrix of constrained θ draws.
    pub theta: Vec<DMatrix<f64>>,
    /// Per chain: kept a0 draws.
    pub a0: Vec<Vec<f64>>,
    /// Diagnostics for [θ_1, …, θ_q, a0].
    pub diagnostics: Diagnostics,
    pub tag: NormalisationTag,
    pub param_names: Vec<String>,
    pub a0_acceptance: f64,
}

impl JointDraws {
    pub fn n_chains(&self) -> usize {
        self.theta.len()
    }

    pub fn n_kept(&self) -> usize {
        self.theta.first().map_or(0, |m| m.nrows())
    }

    pub fn a0_flat(&self) -> Vec<f64> {
        self.a0.iter().flatten().copied().collect()
    }

    pub fn theta_param(&self, p: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.n_kept());
        for m in &self.theta {
            out.extend(m.column(p).iter().copied());
        }
        out
    }
}

/// Mean and central 95% interval for one parameter.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Empirical mean and central quantiles of a sample.
pub fn summary_of(name: &str, values: &[f64]) -> ParamSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    ParamSummary {
        name: name.to_string(),
        mean,
        lower: empirical_quantile(&sorted, 0.025),
        upper: empirical_quantile(&sorted, 0.975),
    }
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let idx = pos.floor() as usize;
    let frac = pos - idx as f64;
    if idx + 1 < n {
        sorted[idx] * (1.0 - frac) + sorted[idx + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Posterior mean and 95% interval per parameter, a0 last.
pub fn summarise(draws: &JointDraws) -> Vec<ParamSummary> {
    let mut out = Vec::with_capacity(draws.param_names.len() + 1);
    for (p, name) in draws.param_names.iter().enumerate() {
        out.push(summary_of(name, &draws.theta_param(p)));
    }
    out.push(summary_of("a0", &draws.a0_flat()));
    out
}

/// Exact quadrature marginal of a0 for conjugate families: the unnormalised
/// log marginal is log π_A(a0) + log ∫ L(D0|θ)^a0 L(D|θ) π(θ) dθ − l(a0),
/// trapezoid-normalised on [0, M].
pub fn exact_marginal_a0(
    model: &ModelSpec,
    historical: &Dataset,
    current: &Dataset,
    prior: &A0Prior,
    k_quad: usize,
) -> Result<DensityTable> {
    let constants = ConjugateConstants::new(model, historical)?;
    let mut failure: Option<Error> = None;
    let table = normalise_density_on_interval(
        |a0| {
            match constants.log_joint_marginal(a0, current) {
                Ok(joint) => prior.log_density(a0) + joint - constants.log_c(a0),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        prior.upper,
        k_quad,
    );
    match (table, failure) {
        (Ok(t), None) => Ok(t),
        (_, Some(e)) => Err(e),
        (Err(e), None) => Err(e),
    }
}

/// Joint sampler configuration knobs beyond the chain layout.
const A0_TARGET_ACCEPTANCE: f64 = 0.44;

/// Sample the joint posterior of (θ, a0) under the requested normalisation.
///
/// Runs under the diagnostics gate: a failing run is retried once with 4×
/// the iterations before reporting the failure.
pub fn sample_joint(
    model: &ModelSpec,
    historical: &Dataset,
    current: &Dataset,
    prior: &A0Prior,
    normalisation: Normalisation,
    cfg: &ChainConfig,
) -> Result<JointDraws> {
    cfg.validate()?;
    if let Normalisation::Dictionary(dict) = normalisation {
        if dict.min_a0() > 0.0 || dict.max_a0() < prior.upper {
            return Err(Error::DictionaryRange {
                requested: prior.upper,
                min: dict.min_a0(),
                max: dict.max_a0(),
            });
        }
    }
    let tag = match normalisation {
        Normalisation::None => NormalisationTag::None,
        Normalisation::Exact(_) => NormalisationTag::Exact,
        Normalisation::Dictionary(d) => NormalisationTag::Approximate { dictionary_size: d.len() },
    };

    let gated = run_gated(cfg, |c| {
        let chains: Vec<Result<JointChain>> = (0..c.n_chains)
            .into_par_iter()
            .map(|chain| run_joint_chain(model, historical, current, prior, normalisation, c, chain as u64))
            .collect();
        let mut theta = Vec::with_capacity(c.n_chains);
        let mut a0 = Vec::with_capacity(c.n_chains);
        let mut acc = 0.0;
        for ch in chains {
            let ch = ch?;
            theta.push(ch.theta);
            a0.push(ch.a0);
            acc += ch.a0_acceptance;
        }
        // Stack a0 as an extra column so one diagnostics pass covers all
        // components; acceptance is smuggled through the output's rate.
        let draws = theta
            .iter()
            .zip(&a0)
            .map(|(t, a)| {
                let mut m = DMatrix::zeros(t.nrows(), t.ncols() + 1);
                m.view_mut((0, 0), (t.nrows(), t.ncols())).copy_from(t);
                for (i, v) in a.iter().enumerate() {
                    m[(i, t.ncols())] = *v;
                }
                m
            })
            .collect();
        Ok(ChainOutput { draws, log_lik: vec![vec![0.0; c.kept()]; c.n_chains], acceptance_rate: acc / c.n_chains as f64 })
    })?;
    let (stacked, diagnostics) = gated;

    let q = model.dim();
    let mut theta = Vec::with_capacity(stacked.draws.len());
    let mut a0 = Vec::with_capacity(stacked.draws.len());
    for m in &stacked.draws {
        theta.push(m.view((0, 0), (m.nrows(), q)).into_owned());
        a0.push(m.column(q).iter().copied().collect());
    }
    Ok(JointDraws {
        theta,
        a0,
        diagnostics,
        tag,
        param_names: model.param_names(),
        a0_acceptance: stacked.acceptance_rate,
    })
}

struct JointChain {
    theta: DMatrix<f64>,
    a0: Vec<f64>,
    a0_acceptance: f64,
}

fn run_joint_chain(
    model: &ModelSpec,
    historical: &Dataset,
    current: &Dataset,
    prior: &A0Prior,
    normalisation: Normalisation,
    cfg: &ChainConfig,
    chain: u64,
) -> Result<JointChain> {
    let mut rng = chain_rng(cfg.seed, chain);
    let q = model.dim();
    let kept = cfg.kept();
    let logistic = model.family() == Family::LogisticRegression;

    let norm_at = |a0: f64| -> Result<f64> {
        match normalisation {
            Normalisation::None => Ok(0.0),
            Normalisation::Exact(cc) => Ok(cc.log_c(a0)),
            Normalisation::Dictionary(d) => lookup_l(d, a0),
        }
    };

    // State: a0 on the logit scale, θ constrained.
    let mut u_a0 = logit((prior.mean() / prior.upper).clamp(1e-6, 1.0 - 1e-6));
    let mut a0 = prior.upper * sigmoid(u_a0);
    let mut theta: Vec<f64> = if logistic {
        (0..q)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.3 * z
            })
            .collect()
    } else {
        exact_conditional_sample(model, historical, a0, Some(current), &mut rng, 1)?
            .pop()
            .expect("one draw requested")
    };
    let mut ll0 = log_likelihood(model, historical, &ThetaPoint::constrained(theta.clone()))?;

    // Warmup-only scale adaptation for the a0 random walk.
    let mut log_step = (1.0f64).ln();
    let mut theta_walker = if logistic { Some(LogisticWalker::new(q)) } else { None };

    let mut out_theta = DMatrix::zeros(kept, q);
    let mut out_a0 = Vec::with_capacity(kept);
    let mut accepted_kept = 0usize;

    for iter in 0..cfg.n_iter {
        let warming = iter < cfg.n_warmup;

        // θ | a0.
        if let Some(w) = theta_walker.as_mut() {
            let target = PowerPriorTarget::new(model, historical, a0, Some(current))?;
            ll0 = w.step(&target, historical, &mut theta, ll0, warming, &mut rng)?;
        } else {
            theta = exact_conditional_sample(model, historical, a0, Some(current), &mut rng, 1)?
                .pop()
                .expect("one draw requested");
            ll0 = log_likelihood(model, historical, &ThetaPoint::constrained(theta.clone()))?;
        }

        // a0 | θ: random walk on logit(a0 / M).
        let z: f64 = StandardNormal.sample(&mut rng);
        let u_prop = u_a0 + log_step.exp() * z;
        let t_prop = sigmoid(u_prop);
        let a0_prop = prior.upper * t_prop;
        let t_cur = sigmoid(u_a0);
        let log_target = |a: f64, t: f64| -> Result<f64> {
            Ok(a * ll0 + prior.log_density(a) - norm_at(a)?
                + t.ln()
                + (1.0 - t).ln())
        };
        let cur = log_target(a0, t_cur)?;
        let prop = log_target(a0_prop, t_prop)?;
        let accept = prop - cur >= 0.0 || rng.random::<f64>().ln() < prop - cur;
        if accept {
            u_a0 = u_prop;
            a0 = a0_prop;
        }
        if warming {
            let gamma = ((iter + 1) as f64).powf(-0.6);
            log_step += gamma * (if accept { 1.0 } else { 0.0 } - A0_TARGET_ACCEPTANCE);
        } else {
            let k = iter - cfg.n_warmup;
            for (j, v) in theta.iter().enumerate() {
                out_theta[(k, j)] = *v;
            }
            out_a0.push(a0);
            if accept {
                accepted_kept += 1;
            }
        }
    }
    if accepted_kept == 0 {
        return Err(Error::Numerical(format!("a0 walk accepted nothing after warmup in chain {chain}")));
    }
    Ok(JointChain { theta: out_theta, a0: out_a0, a0_acceptance: accepted_kept as f64 / kept as f64 })
}

/// Random-walk θ-block for logistic regression inside the joint sampler.
struct LogisticWalker {
    dim: usize,
    log_scale: f64,
    n_seen: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl LogisticWalker {
    fn new(dim: usize) -> Self {
        let cov = DMatrix::identity(dim, dim);
        Self {
            dim,
            log_scale: (2.38 / (dim as f64).sqrt()).ln(),
            n_seen: 0,
            mean: DVector::zeros(dim),
            cov: cov.clone(),
            chol: cov.cholesky().expect("identity"),
        }
    }

    fn step(
        &mut self,
        target: &PowerPriorTarget,
        historical: &Dataset,
        theta: &mut Vec<f64>,
        ll0: f64,
        warming: bool,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let cur = ThetaPoint::constrained(theta.clone());
        let log_cur = log_power_density(target, &cur)?;
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        let step = self.chol.l() * z * self.log_scale.exp();
        let prop: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
        let prop_point = ThetaPoint::constrained(prop.clone());
        let log_prop = log_power_density(target, &prop_point).unwrap_or(f64::NEG_INFINITY);
        let accept = log_prop - log_cur >= 0.0 || rng.random::<f64>().ln() < log_prop - log_cur;
        let new_ll0 = if accept {
            *theta = prop;
            log_likelihood(target.model, historical, &prop_point)?
        } else {
            ll0
        };
        if warming {
            self.n_seen += 1;
            let n = self.n_seen as f64;
            let gamma = n.powf(-0.6);
            self.log_scale += gamma * (if accept { 1.0 } else { 0.0 } - 0.234);
            let u = DVector::from_column_slice(theta);
            let delta = &u - &self.mean;
            self.mean += &delta / n;
            let delta2 = &u - &self.mean;
            self.cov = &self.cov * ((n - 1.0) / n) + &delta * delta2.transpose() / n;
            if self.n_seen > 2 * self.dim && self.n_seen % 50 == 0 {
                let jitter = 1e-8 * (self.cov.trace() / self.dim as f64).max(1e-12);
                let stab = &self.cov + DMatrix::identity(self.dim, self.dim) * jitter;
                if let Some(c) = stab.cholesky() {
                    self.chol = c;
                }
            }
        }
        Ok(new_ll0)
    }
}

/// Prior- and posterior-stage summaries at one fixed a0.
#[derive(Debug, Clone)]
pub struct SensitivityRow {
    pub a0: f64,
    pub prior_stage: Vec<ParamSummary>,
    pub posterior_stage: Vec<ParamSummary>,
}

/// Result of a fixed-a0 sensitivity analysis over a list of discount values.
#[derive(Debug, Clone)]
pub struct SensitivityResult {
    pub rows: Vec<SensitivityRow>,
}

/// For each fixed a0, summarise the power prior (historical data only) and
/// the power posterior (with current data).
pub fn sensitivity_analysis(
    model: &ModelSpec,
    historical: &Dataset,
    current: &Dataset,
    a0_list: &[f64],
    cfg: &ChainConfig,
) -> Result<SensitivityResult> {
    if a0_list.is_empty() {
        return Err(Error::InvalidArgument("sensitivity analysis needs at least one a0".into()));
    }
    if a0_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("a0 list must be strictly increasing".into()));
    }
    let names = model.param_names();
    let rows: Vec<Result<SensitivityRow>> = a0_list
        .par_iter()
        .map(|&a0| {
            let summarize_stage = |current: Option<&Dataset>| -> Result<Vec<ParamSummary>> {
                let target = PowerPriorTarget::new(model, historical, a0, current)?;
                let (out, _) = run_gated(cfg, |c| sample_power_posterior(&target, c))
                    .map_err(|e| match e {
                        Error::DiagnosticsGate(msg) => {
                            Error::DiagnosticsGate(format!("a0 = {a0}: {msg}"))
                        }
                        other => other,
                    })?;
                Ok(names
                    .iter()
                    .enumerate()
                    .map(|(p, n)| summary_of(n, &out.param(p)))
                    .collect())
            };
            Ok(SensitivityRow {
                a0,
                prior_stage: summarize_stage(None)?,
                posterior_stage: summarize_stage(Some(current))?,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SensitivityResult { rows })
}

/// Kolmogorov–Smirnov distance between the sampled a0 marginal and a
/// reference CDF table.
pub fn a0_ks_distance(draws: &JointDraws, reference: &DensityTable) -> f64 {
    reference.ks_distance(&draws.a0_flat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvefit::{fit_l_curve, predict_dictionary};
    use crate::grid::{build_adaptive_grid, ClosedFormEvaluator, GridBudget};
    use approx::assert_relative_eq;

    fn scenario1() -> (ModelSpec, Dataset, Dataset) {
        (
            ModelSpec::beta_bernoulli(1.0, 1.0).unwrap(),
            Dataset::bernoulli_counts(20, 100).unwrap(),
            Dataset::bernoulli_counts(20, 100).unwrap(),
        )
    }

    #[test]
    fn exact_marginal_matches_table_values() {
        let (model, d0, d) = scenario1();
        let prior = A0Prior::flat();
        let t = exact_marginal_a0(&model, &d0, &d, &prior, 4001).unwrap();
        assert!((t.mean() - 0.573).abs() < 0.01, "mean {}", t.mean());
        assert!((t.quantile(0.025) - 0.07).abs() < 0.02);
        assert!((t.quantile(0.975) - 0.98).abs() < 0.02);
    }

    #[test]
    fn exact_marginal_scenario4() {
        let model = ModelSpec::beta_bernoulli(1.0, 1.0).unwrap();
        let d0 = Dataset::bernoulli_counts(100, 1000).unwrap();
        let d = Dataset::bernoulli_counts(200, 1000).unwrap();
        let prior = A0Prior::flat();
        let t = exact_marginal_a0(&model, &d0, &d, &prior, 4001).unwrap();
        assert!((t.mean() - 0.045).abs() < 0.01, "mean {}", t.mean());
        assert!(t.quantile(0.975) < 0.2);
    }

    #[test]
    fn summaries_of_symmetric_draws_are_centred() {
        let vals: Vec<f64> = (0..10001).map(|i| -1.0 + 2.0 * i as f64 / 10000.0).collect();
        let s = summary_of("x", &vals);
        assert_relative_eq!(s.mean, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.lower, -0.95, epsilon = 1e-3);
        assert_relative_eq!(s.upper, 0.95, epsilon = 1e-3);
    }

    #[test]
    fn joint_sampler_exact_normalisation_matches_quadrature_marginal() {
        let (model, d0, d) = scenario1();
        let prior = A0Prior::flat();
        let constants = ConjugateConstants::new(&model, &d0).unwrap();
        let cfg = ChainConfig::with_seed(71);
        let draws =
            sample_joint(&model, &d0, &d, &prior, Normalisation::Exact(&constants), &cfg).unwrap();
        let reference = exact_marginal_a0(&model, &d0, &d, &prior, 8001).unwrap();
        let ks = a0_ks_distance(&draws, &reference);
        assert!(ks <= 0.05, "KS distance {ks}");
        let summary = summarise(&draws);
        assert!((summary[0].mean - 0.20).abs() < 0.02, "theta mean {}", summary[0].mean);
        assert!((summary[1].mean - 0.57).abs() < 0.1, "a0 mean {}", summary[1].mean);
    }

    #[test]
    fn joint_sampler_dictionary_normalisation_tracks_exact() {
        let (model, d0, d) = scenario1();
        let prior = A0Prior::flat();
        let eval = ClosedFormEvaluator::new(&model, &d0).unwrap();
        let grid = build_adaptive_grid(&eval, &GridBudget::default(), true).unwrap();
        let dict = predict_dictionary(&fit_l_curve(&grid).unwrap(), 20_000, 1.0).unwrap();
        let cfg = ChainConfig::with_seed(72);
        let draws =
            sample_joint(&model, &d0, &d, &prior, Normalisation::Dictionary(&dict), &cfg).unwrap();
        assert_eq!(draws.tag, NormalisationTag::Approximate { dictionary_size: 20_000 });
        let reference = exact_marginal_a0(&model, &d0, &d, &prior, 8001).unwrap();
        assert!(a0_ks_distance(&draws, &reference) <= 0.05);
    }

    #[test]
    fn degenerate_likelihood_leaves_a0_prior_invariant() {
        // One all-success historical trial with strong all-success current
        // data pins θ next to 1, so ln L(D0|θ) ≈ 0 and a0 decouples: its
        // marginal must reproduce the Beta prior. A zero dictionary checks
        // the lookup path under the same degeneracy (l ≡ 0).
        let model = ModelSpec::beta_bernoulli(1.0, 1.0).unwrap();
        let d0 = Dataset::bernoulli_counts(1, 1).unwrap();
        let d = Dataset::bernoulli_counts(2000, 2000).unwrap();
        let prior = A0Prior::new(2.0, 3.0, 1.0).unwrap();
        let cfg = ChainConfig { n_iter: 30_000, n_warmup: 1000, ..ChainConfig::with_seed(61) };

        let k = 64;
        let zero_dict = Dictionary {
            a0_grid: (0..=k).map(|i| i as f64 / k as f64).collect(),
            l_values: vec![0.0; k + 1],
            provenance: crate::curvefit::Provenance::Direct,
        };
        for norm in [Normalisation::None, Normalisation::Dictionary(&zero_dict)] {
            let draws = sample_joint(&model, &d0, &d, &prior, norm, &cfg).unwrap();
            let a0 = draws.a0_flat();
            // Sup-norm of binned density against the prior density.
            let bins = 10;
            let mut counts = vec![0usize; bins];
            for v in &a0 {
                counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
            }
            let mut sup = 0.0f64;
            for (b, c) in counts.iter().enumerate() {
                let emp = *c as f64 / a0.len() as f64 * bins as f64;
                // Compare against the prior's own bin average.
                let lo = b as f64 / bins as f64;
                let hi = (b + 1) as f64 / bins as f64;
                let avg = (prior.cdf(hi) - prior.cdf(lo)) * bins as f64;
                sup = sup.max((emp - avg).abs());
            }
            assert!(sup <= 0.05, "binned density deviates by {sup}");
            let mean = summary_of("a0", &a0).mean;
            assert!((mean - prior.mean()).abs() < 0.02, "a0 mean {mean} vs {}", prior.mean());
        }
    }

    #[test]
    fn unsupported_exact_normalisation_is_a_type_level_dead_end() {
        let model = ModelSpec::logistic_regression(1).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[0.5, -0.5, 1.0, -1.0]);
        let data = Dataset::binary_regression(vec![1, 0, 1, 0], x).unwrap();
        assert!(ConjugateConstants::new(&model, &data).is_err());
    }

    #[test]
    fn dictionary_not_covering_prior_support_is_rejected() {
        let (model, d0, d) = scenario1();
        let prior = A0Prior::flat();
        let dict = Dictionary {
            a0_grid: vec![0.0, 0.4, 0.8],
            l_values: vec![0.0, -1.0, -2.0],
            provenance: crate::curvefit::Provenance::Direct,
        };
        let cfg = ChainConfig::with_seed(73);
        assert!(matches!(
            sample_joint(&model, &d0, &d, &prior, Normalisation::Dictionary(&dict), &cfg),
            Err(Error::DictionaryRange { .. })
        ));
    }

    #[test]
    fn seeded_joint_runs_are_bit_identical() {
        let (model, d0, d) = scenario1();
        let prior = A0Prior::flat();
        let cfg = ChainConfig::with_seed(99);
        let a = sample_joint(&model, &d0, &d, &prior, Normalisation::None, &cfg).unwrap();
        let b = sample_joint(&model, &d0, &d, &prior, Normalisation::None, &cfg).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.a0, b.a0);
    }

    #[test]
    fn unnormalised_a0_collapses_for_scenario3() {
        let model = ModelSpec::beta_bernoulli(1.0, 1.0).unwrap();
        let d0 = Dataset::bernoulli_counts(200, 1000).unwrap();
        let d = Dataset::bernoulli_counts(200, 1000).unwrap();
        let prior = A0Prior::flat();
        let cfg = ChainConfig::with_seed(80);
        let draws = sample_joint(&model, &d0, &d, &prior, Normalisation::None, &cfg).unwrap();
        let mean = summary_of("a0", &draws.a0_flat()).mean;
        assert!(mean <= 0.05, "unnormalised a0 mean {mean}");
    }

    #[test]
    fn sensitivity_rows_are_ordered_and_gated() {
        let (model, d0, d) = scenario1();
        let cfg = ChainConfig::with_seed(55);
        let res = sensitivity_analysis(&model, &d0, &d, &[0.0, 0.5, 1.0], &cfg).unwrap();
        assert_eq!(res.rows.len(), 3);
        // a0 = 0 prior stage is the Beta(1,1) initial prior.
        let row0 = &res.rows[0];
        assert!((row0.prior_stage[0].mean - 0.5).abs() < 0.02);
        assert!((row0.prior_stage[0].lower - 0.025).abs() < 0.02);
        assert!((row0.prior_stage[0].upper - 0.975).abs() < 0.02);
        assert!(sensitivity_analysis(&model, &d0, &d, &[0.5, 0.2], &cfg).is_err());
    }
}
