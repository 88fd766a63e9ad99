//! Power-posterior sampling at fixed a0.
//!
//! Conjugate families delegate to the exact conditional samplers, so each
//! "chain" is i.i.d.; logistic regression runs an adaptive random-walk
//! Metropolis on the unconstrained space, with covariance and scale adapted
//! during warmup only so kept draws target the exact invariant distribution.
//! Every kept draw records log L(D0 | θ): its mean estimates l'(a0) and its
//! variance estimates l''(a0), which is what makes derivative evaluations
//! essentially free alongside constant estimation.

use crate::conjugate::exact_conditional_sample;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{
    log_likelihood, transform_to_constrained, Family,
    PowerPriorTarget, ThetaPoint,
};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Chain layout, iteration counts and the adaptation target.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_warmup: usize,
    pub seed: u64,
    /// Acceptance-rate target for multivariate random-walk adaptation.
    pub target_acceptance: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_chains: 4, n_iter: 2000, n_warmup: 1000, seed: 0, target_acceptance: 0.234 }
    }
}

impl ChainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_warmup >= self.n_iter {
            return Err(Error::InvalidArgument("warmup must be shorter than the run".into()));
        }
        if self.n_chains < 2 {
            return Err(Error::InvalidArgument("need at least two chains for split diagnostics".into()));
        }
        if !(0.0..1.0).contains(&self.target_acceptance) || self.target_acceptance <= 0.0 {
            return Err(Error::InvalidArgument("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.n_iter - self.n_warmup
    }

    /// Same run, 4× the iterations; used by the diagnostics-gate retry.
    pub fn scaled_up(&self) -> Self {
        Self { n_iter: self.n_iter * 4, n_warmup: self.n_warmup * 4, ..self.clone() }
    }
}

/// Kept draws from all chains, in constrained space, plus the historical
/// log-likelihood trace.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Per chain: kept × q matrix of constrained draws.
    pub draws: Vec<DMatrix<f64>>,
    /// Per chain: log L(D0 | θ) for every kept draw.
    pub log_lik: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

impl ChainOutput {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_kept(&self) -> usize {
        self.draws.first().map_or(0, |m| m.nrows())
    }

    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, |m| m.ncols())
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_kept()
    }

    /// All draws of one parameter, chain-major.
    pub fn param(&self, p: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_draws());
        for m in &self.draws {
            out.extend(m.column(p).iter().copied());
        }
        out
    }

    /// Flattened log-likelihood trace, chain-major.
    pub fn log_lik_flat(&self) -> Vec<f64> {
        self.log_lik.iter().flatten().copied().collect()
    }
}

/// Per-parameter convergence diagnostics.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub mcse: Vec<f64>,
    pub posterior_sd: Vec<f64>,
}

impl Diagnostics {
    /// The gate used throughout: R̂ < 1.01 and MCSE below 5% of the
    /// posterior standard deviation, for every parameter.
    pub fn passes_gate(&self) -> bool {
        self.rhat.iter().all(|r| *r < 1.01)
            && self
                .mcse
                .iter()
                .zip(&self.posterior_sd)
                .all(|(m, s)| *m < 0.05 * s.max(f64::MIN_POSITIVE))
    }
}

/// Deterministic per-chain RNG stream derived from (seed, stream id).
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw from the power posterior of `target` at its fixed a0.
///
/// Conjugate families produce i.i.d. exact draws; logistic regression uses
/// adaptive random-walk Metropolis. The log-likelihood trace is always
/// populated from the historical data.
pub fn sample_power_posterior(target: &PowerPriorTarget, cfg: &ChainConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    match target.model.family() {
        Family::LogisticRegression => sample_rwm(target, cfg),
        _ => sample_exact(target, cfg),
    }
}

fn sample_exact(target: &PowerPriorTarget, cfg: &ChainConfig) -> Result<ChainOutput> {
    let kept = cfg.kept();
    let chains: Vec<Result<(DMatrix<f64>, Vec<f64>)>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(cfg.seed, chain as u64);
            let draws = exact_conditional_sample(
                target.model,
                target.historical,
                target.a0,
                target.current,
                &mut rng,
                kept,
            )?;
            let q = target.model.dim();
            let mut m = DMatrix::zeros(kept, q);
            let mut ll = Vec::with_capacity(kept);
            for (i, theta) in draws.iter().enumerate() {
                for (j, v) in theta.iter().enumerate() {
                    m[(i, j)] = *v;
                }
                ll.push(log_likelihood(
                    target.model,
                    target.historical,
                    &ThetaPoint::constrained(theta.clone()),
                )?);
            }
            Ok((m, ll))
        })
        .collect();
    let mut draws = Vec::with_capacity(cfg.n_chains);
    let mut log_lik = Vec::with_capacity(cfg.n_chains);
    for c in chains {
        let (m, ll) = c?;
        draws.push(m);
        log_lik.push(ll);
    }
    Ok(ChainOutput { draws, log_lik, acceptance_rate: 1.0 })
}

fn sample_rwm(target: &PowerPriorTarget, cfg: &ChainConfig) -> Result<ChainOutput> {
    let q = target.model.dim();
    let chains: Vec<Result<(DMatrix<f64>, Vec<f64>, f64)>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain| run_rwm_chain(target, cfg, chain as u64, q))
        .collect();
    let mut draws = Vec::with_capacity(cfg.n_chains);
    let mut log_lik = Vec::with_capacity(cfg.n_chains);
    let mut acc = 0.0;
    for c in chains {
        let (m, ll, a) = c?;
        draws.push(m);
        log_lik.push(ll);
        acc += a;
    }
    Ok(ChainOutput { draws, log_lik, acceptance_rate: acc / cfg.n_chains as f64 })
}

fn run_rwm_chain(
    target: &PowerPriorTarget,
    cfg: &ChainConfig,
    chain: u64,
    q: usize,
) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
    let mut rng = chain_rng(cfg.seed, chain);
    // Overdispersed start: prior-scale jitter on the unconstrained space.
    let mut u = DVector::from_fn(q, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.5 * z
    });
    let mut log_f = target.log_density_unconstrained(u.as_slice())?;
    if !log_f.is_finite() {
        return Err(Error::Numerical(format!("non-finite log density at initialisation of chain {chain}")));
    }

    let kept = cfg.kept();
    let mut adapt = RwmAdapter::new(q, cfg.target_acceptance);
    let mut out = DMatrix::zeros(kept, q);
    let mut ll = Vec::with_capacity(kept);
    let mut accepted_kept = 0usize;

    for iter in 0..cfg.n_iter {
        let warming = iter < cfg.n_warmup;
        let prop = adapt.propose(&u, &mut rng);
        let log_f_prop = target.log_density_unconstrained(prop.as_slice()).unwrap_or(f64::NEG_INFINITY);
        let log_alpha = log_f_prop - log_f;
        let accept = log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha;
        if accept {
            u = prop;
            log_f = log_f_prop;
        }
        if warming {
            adapt.update(&u, accept);
            if iter + 1 == cfg.n_warmup {
                adapt.freeze();
            }
        } else {
            let k = iter - cfg.n_warmup;
            let point = ThetaPoint::unconstrained(u.as_slice().to_vec());
            let (theta, _) = transform_to_constrained(target.model, &point)?;
            for (j, v) in theta.values.iter().enumerate() {
                out[(k, j)] = *v;
            }
            ll.push(log_likelihood(target.model, target.historical, &theta)?);
            if accept {
                accepted_kept += 1;
            }
        }
    }
    if accepted_kept == 0 {
        return Err(Error::Numerical(format!("chain {chain} accepted no proposals after warmup")));
    }
    Ok((out, ll, accepted_kept as f64 / kept as f64))
}

/// Random-walk proposal with warmup-only scale and covariance adaptation.
struct RwmAdapter {
    dim: usize,
    log_scale: f64,
    target: f64,
    n_seen: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    frozen: bool,
}

impl RwmAdapter {
    fn new(dim: usize, target: f64) -> Self {
        let cov = DMatrix::identity(dim, dim);
        let chol = cov.clone().cholesky().expect("identity is positive definite");
        Self {
            dim,
            // 2.38/sqrt(d) is the classic optimal-scaling start.
            log_scale: (2.38 / (dim as f64).sqrt()).ln(),
            target,
            n_seen: 0,
            mean: DVector::zeros(dim),
            cov,
            chol,
            frozen: false,
        }
    }

    fn propose(&self, u: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        u + self.chol.l() * z * self.log_scale.exp()
    }

    fn update(&mut self, u: &DVector<f64>, accepted: bool) {
        self.n_seen += 1;
        let n = self.n_seen as f64;
        // Robbins–Monro on the log step size.
        let gamma = n.powf(-0.6);
        self.log_scale += gamma * (if accepted { 1.0 } else { 0.0 } - self.target);
        // Running moments for the proposal covariance.
        let delta = u - &self.mean;
        self.mean += &delta / n;
        let delta2 = u - &self.mean;
        self.cov = &self.cov * ((n - 1.0) / n) + &delta * delta2.transpose() / n;
        if self.n_seen > 2 * self.dim && self.n_seen % 50 == 0 {
            self.refresh_chol();
        }
    }

    fn freeze(&mut self) {
        if !self.frozen {
            self.refresh_chol();
            self.frozen = true;
        }
    }

    fn refresh_chol(&mut self) {
        let jitter = 1e-8 * (self.cov.trace() / self.dim as f64).max(1e-12);
        let stabilised = &self.cov + DMatrix::identity(self.dim, self.dim) * jitter;
        if let Some(c) = stabilised.cholesky() {
            self.chol = c;
        }
    }
}

/// Split-R̂, autocorrelation ESS and MCSE per parameter.
pub fn compute_diagnostics(out: &ChainOutput) -> Result<Diagnostics> {
    if out.n_chains() < 2 {
        return Err(Error::InvalidArgument("need at least two chains for split diagnostics".into()));
    }
    let q = out.dim();
    let mut rhat = Vec::with_capacity(q);
    let mut ess = Vec::with_capacity(q);
    let mut mcse = Vec::with_capacity(q);
    let mut sds = Vec::with_capacity(q);
    for p in 0..q {
        let series: Vec<Vec<f64>> =
            out.draws.iter().map(|m| m.column(p).iter().copied().collect()).collect();
        let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
        let (r, e) = rhat_ess(&refs)?;
        let all = out.param(p);
        let sd = sample_sd(&all);
        rhat.push(r);
        ess.push(e);
        mcse.push(sd / e.sqrt());
        sds.push(sd);
    }
    Ok(Diagnostics { rhat, ess, mcse, posterior_sd: sds })
}

/// Mean of the historical log-likelihood trace: an MCMC estimate of l'(a0),
/// with its Monte Carlo standard error.
pub fn estimate_l_prime(out: &ChainOutput) -> Result<(f64, f64)> {
    let series: Vec<&[f64]> = out.log_lik.iter().map(|v| v.as_slice()).collect();
    if series.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("log-likelihood trace is empty".into()));
    }
    let flat = out.log_lik_flat();
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    let sd = sample_sd(&flat);
    if sd == 0.0 {
        return Ok((mean, 0.0));
    }
    let (_, ess) = rhat_ess(&series)?;
    Ok((mean, sd / ess.sqrt()))
}

/// Variance of the historical log-likelihood trace: an MCMC estimate of
/// l''(a0) (always non-negative), with a moment-based standard error.
pub fn estimate_l_second(out: &ChainOutput) -> Result<(f64, f64)> {
    let flat = out.log_lik_flat();
    if flat.is_empty() {
        return Err(Error::InvalidArgument("log-likelihood trace is empty".into()));
    }
    let n = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / n;
    let var = flat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    if var == 0.0 {
        return Ok((0.0, 0.0));
    }
    let m4 = flat.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    // Effective sample size of the squared-deviation series drives the error.
    let sq: Vec<Vec<f64>> = out
        .log_lik
        .iter()
        .map(|c| c.iter().map(|v| (v - mean) * (v - mean)).collect())
        .collect();
    let refs: Vec<&[f64]> = sq.iter().map(|v| v.as_slice()).collect();
    let ess = rhat_ess(&refs).map(|(_, e)| e).unwrap_or(n);
    let se = ((m4 - var * var).max(0.0) / ess).sqrt();
    Ok((var, se))
}

/// Run a sampler closure under the diagnostics gate: retry once with 4× the
/// iterations, then fail.
pub fn run_gated<F>(cfg: &ChainConfig, mut sample: F) -> Result<(ChainOutput, Diagnostics)>
where
    F: FnMut(&ChainConfig) -> Result<ChainOutput>,
{
    let out = sample(cfg)?;
    let diag = compute_diagnostics(&out)?;
    if diag.passes_gate() {
        return Ok((out, diag));
    }
    let bigger = cfg.scaled_up();
    let out = sample(&bigger)?;
    let diag = compute_diagnostics(&out)?;
    if diag.passes_gate() {
        Ok((out, diag))
    } else {
        let worst = diag.rhat.iter().cloned().fold(1.0f64, f64::max);
        Err(Error::DiagnosticsGate(format!(
            "R-hat {worst:.4} or MCSE above 5% of sd after a 4x retry"
        )))
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Split-R̂ and autocorrelation-ESS for one scalar series across chains,
/// following the split-chain potential scale reduction factor and Geyer's
/// initial-positive-sequence truncation.
fn rhat_ess(chains: &[&[f64]]) -> Result<(f64, f64)> {
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) || len < 4 {
        return Err(Error::InvalidArgument("chains must share a length of at least 4".into()));
    }
    // Split each chain in half.
    let half = len / 2;
    let split: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..]])
        .collect();
    let m = split.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = split.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let vars: Vec<f64> = split
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m;
    if w <= 0.0 && b <= 0.0 {
        return Err(Error::Numerical("constant chains: zero within- and between-variance".into()));
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    let rhat = if w > 0.0 { (var_plus / w).sqrt() } else { f64::INFINITY };

    // Combined autocovariance estimate (averaged over split chains).
    let max_lag = half - 1;
    let mut rho_sum = 0.0;
    let mut tau = 1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 1;
    while lag + 1 <= max_lag {
        let rho_a = 1.0 - (w - mean_autocov(&split, &means, lag)) / var_plus;
        let rho_b = 1.0 - (w - mean_autocov(&split, &means, lag + 1)) / var_plus;
        let mut pair = rho_a + rho_b;
        if pair < 0.0 {
            break;
        }
        // Enforce monotone decrease of the paired sums.
        pair = pair.min(prev_pair);
        prev_pair = pair;
        rho_sum += pair;
        lag += 2;
    }
    tau += 2.0 * rho_sum;
    let total = m * n;
    let ess = (total / tau).min(total);
    Ok((rhat, ess.max(1.0)))
}

fn mean_autocov(chains: &[&[f64]], means: &[f64], lag: usize) -> f64 {
    let mut acc = 0.0;
    for (c, mu) in chains.iter().zip(means) {
        let n = c.len();
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (c[i] - mu) * (c[i + lag] - mu);
        }
        acc += s / n as f64;
    }
    acc / chains.len() as f64
}

/// Log-mean-exp convenience for importance-style averages.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}
