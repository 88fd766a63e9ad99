//! Bridge-sampling estimates of l(a0) = log c(a0).
//!
//! Given power-posterior draws targeting f_{a0}(D0; θ) (unnormalised) and a
//! moment-matched multivariate normal proposal g on the unconstrained space,
//! the optimal-bridge fixed point is iterated to convergence:
//!
//!   ĉ ← (1/M) Σ_prop w_i / (s1·w_i + s2·ĉ)  ÷  (1/N) Σ_post 1 / (s1·w_j + s2·ĉ)
//!
//! with w = f/g, s1 = N_eff/(N_eff + M) and s2 = 1 − s1; N_eff is the
//! ESS-adjusted posterior draw count. All arithmetic runs in log space. The
//! relative error proxy is the delta-method coefficient-of-variation
//! combination of the two summand sets.

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, lse2};
use crate::mcmc::{compute_diagnostics, ChainOutput};
use crate::model::{transform_to_unconstrained, ModelSpec, PowerPriorTarget, ThetaPoint};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Moment-matched multivariate normal proposal on the unconstrained space.
pub struct ProposalFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl ProposalFit {
    /// Build a proposal from explicit moments (jitter already applied).
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = cov
            .clone()
            .cholesky()
            .filter(|c| c.l().diagonal().iter().all(|d| d.is_finite() && *d > 0.0))
            .ok_or_else(|| Error::Numerical("proposal covariance is singular after jitter".into()))?;
        let dim = mean.len() as f64;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (dim * crate::math::LN_2PI + log_det);
        Ok(Self { mean, cov, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Multivariate normal log-density at u.
    pub fn log_density(&self, u: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(u) - &self.mean;
        let z = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor is nonsingular");
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + self.chol.l() * z
    }
}

/// Fit a proposal to the unconstrained transform of posterior draws:
/// sample mean and covariance with a 1e-8·tr(Σ)/q diagonal jitter.
pub fn fit_proposal(draws: &ChainOutput, model: &ModelSpec) -> Result<ProposalFit> {
    let q = model.dim();
    let n = draws.total_draws();
    if n < q + 2 {
        return Err(Error::InvalidArgument(format!("need at least {} draws to fit a proposal", q + 2)));
    }
    let mut u = DMatrix::zeros(n, q);
    let mut row = 0;
    for chain in &draws.draws {
        for i in 0..chain.nrows() {
            let theta = ThetaPoint::constrained(chain.row(i).iter().copied().collect());
            let (point, _) = transform_to_unconstrained(model, &theta)?;
            for (j, v) in point.values.iter().enumerate() {
                u[(row, j)] = *v;
            }
            row += 1;
        }
    }
    for j in 0..q {
        let col = u.column(j);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        if lo == hi {
            return Err(Error::Numerical(format!(
                "draws are constant in parameter {j}; proposal covariance is singular"
            )));
        }
    }
    let mean = u.row_mean().transpose();
    let mut centred = u;
    for i in 0..n {
        for j in 0..q {
            centred[(i, j)] -= mean[j];
        }
    }
    let mut cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let jitter = 1e-8 * cov.trace() / q as f64;
    for j in 0..q {
        cov[(j, j)] += jitter;
    }
    ProposalFit::from_moments(mean, cov)
}

/// Stopping rule and draw counts for the iterative bridge update.
#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Relative-change stopping tolerance on ĉ.
    pub tol: f64,
    pub max_iter: usize,
    /// Proposal draw count M; defaults to the posterior draw count.
    pub n_proposal: Option<usize>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1000, n_proposal: None }
    }
}

/// A bridge estimate of log c(a0) with its relative-error proxy.
#[derive(Debug, Clone, Copy)]
pub struct BridgeEstimate {
    pub log_c: f64,
    pub rel_mcse: f64,
    pub iterations: usize,
}

/// Estimate log c(a0) from power-posterior draws.
///
/// The target must carry no current data: the estimand is the prior
/// normalising constant, not a posterior evidence.
pub fn bridge_log_c(
    target: &PowerPriorTarget,
    draws: &ChainOutput,
    cfg: &BridgeConfig,
    rng: &mut impl Rng,
) -> Result<BridgeEstimate> {
    if target.current.is_some() {
        return Err(Error::InvalidArgument(
            "bridge_log_c estimates the prior constant; drop the current dataset".into(),
        ));
    }
    if cfg.tol <= 0.0 || cfg.max_iter < 1 {
        return Err(Error::InvalidArgument("bridge tolerance and iteration cap must be positive".into()));
    }
    // Fit the proposal on the first half of each chain and bridge with the
    // second half. Fitting and weighting on the same draws biases the
    // estimate downward by about d²/2N, which is visible in high dimension.
    let (fit_half, bridge_half) = split_chains(draws);
    let proposal = fit_proposal(&fit_half, target.model)?;
    let m = cfg.n_proposal.unwrap_or(bridge_half.total_draws());

    // Log-weights of the posterior draws: w = f/g on the unconstrained space.
    let mut lw_post = Vec::with_capacity(bridge_half.total_draws());
    for chain in &bridge_half.draws {
        for i in 0..chain.nrows() {
            let theta = ThetaPoint::constrained(chain.row(i).iter().copied().collect());
            let (point, _) = transform_to_unconstrained(target.model, &theta)?;
            let lf = target.log_density_unconstrained(&point.values)?;
            lw_post.push(lf - proposal.log_density(&point.values));
        }
    }
    // Log-weights of fresh proposal draws.
    let mut lw_prop = Vec::with_capacity(m);
    for _ in 0..m {
        let u = proposal.sample(rng);
        let lf = target
            .log_density_unconstrained(u.as_slice())
            .unwrap_or(f64::NEG_INFINITY);
        lw_prop.push(lf - proposal.log_density(u.as_slice()));
    }

    let bad = lw_post.iter().chain(&lw_prop).filter(|w| w.is_nan() || **w == f64::INFINITY).count();
    if bad > 0 {
        return Err(Error::NonFiniteWeights(bad));
    }

    // Autocorrelation discount for MCMC draws; exact samplers give ESS ≈ N.
    let n_eff = effective_posterior_count(&bridge_half);
    iterate_bridge(&lw_post, &lw_prop, n_eff, cfg)
}

/// First and second halves of every chain, as two chain sets.
fn split_chains(draws: &ChainOutput) -> (ChainOutput, ChainOutput) {
    let mut first = Vec::with_capacity(draws.n_chains());
    let mut second = Vec::with_capacity(draws.n_chains());
    let mut ll_first = Vec::with_capacity(draws.n_chains());
    let mut ll_second = Vec::with_capacity(draws.n_chains());
    for (chain, ll) in draws.draws.iter().zip(&draws.log_lik) {
        let h = chain.nrows() / 2;
        first.push(chain.rows(0, h).into_owned());
        second.push(chain.rows(h, chain.nrows() - h).into_owned());
        ll_first.push(ll[..h].to_vec());
        ll_second.push(ll[h..].to_vec());
    }
    (
        ChainOutput { draws: first, log_lik: ll_first, acceptance_rate: draws.acceptance_rate },
        ChainOutput { draws: second, log_lik: ll_second, acceptance_rate: draws.acceptance_rate },
    )
}

fn effective_posterior_count(draws: &ChainOutput) -> f64 {
    let n = draws.total_draws() as f64;
    match compute_diagnostics(draws) {
        Ok(d) => d.ess.iter().cloned().fold(n, f64::min).max(2.0),
        Err(_) => n,
    }
}

/// The iterative optimal-bridge update on explicit log-weights. Exposed so
/// invariance properties can be tested with externally supplied proposals.
pub fn iterate_bridge(
    lw_post: &[f64],
    lw_prop: &[f64],
    n_eff: f64,
    cfg: &BridgeConfig,
) -> Result<BridgeEstimate> {
    let n = lw_post.len() as f64;
    let m = lw_prop.len() as f64;
    if n < 2.0 || m < 2.0 {
        return Err(Error::InvalidArgument("bridge needs at least two draws on each side".into()));
    }
    let s1 = n_eff / (n_eff + m);
    let s2 = m / (n_eff + m);
    let (ls1, ls2) = (s1.ln(), s2.ln());

    // Importance-sampling start from the proposal side.
    let mut log_c = log_sum_exp(lw_prop) - m.ln();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let num: Vec<f64> =
            lw_prop.iter().map(|&w| w - lse2(ls1 + w, ls2 + log_c)).collect();
        let den: Vec<f64> =
            lw_post.iter().map(|&w| -lse2(ls1 + w, ls2 + log_c)).collect();
        let next = (log_sum_exp(&num) - m.ln()) - (log_sum_exp(&den) - n.ln());
        let delta = (next - log_c).abs();
        log_c = next;
        if delta < cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::BridgeNonConvergence(cfg.max_iter));
        }
    }

    // Delta-method relative error from the final summand sets, computed on
    // a log_c-centred scale (the coefficient of variation is scale-free and
    // the raw f2 summands overflow once |log c| passes ~700).
    let f1: Vec<f64> = lw_prop
        .iter()
        .map(|&w| (w - log_c - lse2(ls1 + w - log_c, ls2)).exp())
        .collect();
    let f2: Vec<f64> =
        lw_post.iter().map(|&w| (-lse2(ls1 + w - log_c, ls2)).exp()).collect();
    let re2 = cv2(&f1) / m + cv2(&f2) / n_eff;
    Ok(BridgeEstimate { log_c, rel_mcse: re2.max(0.0).sqrt(), iterations })
}

fn cv2(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var / (mean * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::bern_log_c;
    use crate::data::Dataset;
    use crate::mcmc::{chain_rng, sample_power_posterior, ChainConfig};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn identical_draws_make_a_singular_proposal() {
        let model = ModelSpec::beta_bernoulli(1.0, 1.0).unwrap();
        let out = ChainOutput {
            draws: vec![DMatrix::from_element(50, 1, 0.4), DMatrix::from_element(50, 1, 0.4)],
            log_lik: vec![vec![0.0; 50]; 2],
            acceptance_rate: 1.0,
        };
        assert!(fit_proposal(&out, &model).is_err());
    }

    #[test]
    fn proposal_moments_recover_synthetic_normal() {
        let model = ModelSpec::logistic_regression(1).unwrap();
        let mut rng = chain_rng(4, 0);
        let draws: Vec<DMatrix<f64>> = (0..2)
            .map(|_| DMatrix::from_fn(4000, 2, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let out = ChainOutput { draws, log_lik: vec![vec![0.0; 4000]; 2], acceptance_rate: 1.0 };
        let fit = fit_proposal(&out, &model).unwrap();
        let se = 1.0 / (8000.0f64).sqrt();
        for j in 0..2 {
            assert!(fit.mean[j].abs() < 3.0 * se);
            assert!((fit.cov[(j, j)] - 1.0).abs() < 5.0 * se);
        }
    }

    #[test]
    fn proposal_log_density_matches_direct_formula() {
        let mean = DVector::from_column_slice(&[0.5, -1.0]);
        let cov = dmatrix![2.0, 0.3; 0.3, 1.0];
        let fit = ProposalFit::from_moments(mean.clone(), cov.clone()).unwrap();
        let u = [0.1, 0.2];
        let diff = DVector::from_column_slice(&u) - &mean;
        let inv = cov.clone().try_inverse().unwrap();
        let expect = -0.5 * (2.0 * crate::math::LN_2PI + cov.determinant().ln())
            - 0.5 * (inv * &diff).dot(&diff);
        assert_relative_eq!(fit.log_density(&u), expect, epsilon = 1e-10);
    }

    #[test]
    fn bernoulli_bridge_hits_closed_form() {
        let model = ModelSpec::beta_bernoulli(1.0, 1.0).unwrap();
        let data = Dataset::bernoulli_counts(20, 100).unwrap();
        let truth = bern_log_c(0.5, 20.0, 100.0, 1.0, 1.0).unwrap();
        let mut hits = 0;
        for seed in 0..20u64 {
            let target = PowerPriorTarget::new(&model, &data, 0.5, None).unwrap();
            let out = sample_power_posterior(&target, &ChainConfig::with_seed(seed)).unwrap();
            let mut rng = chain_rng(seed, 1000);
            let est = bridge_log_c(&target, &out, &BridgeConfig::default(), &mut rng).unwrap();
            if (est.log_c - truth).abs() <= 3.0 * est.rel_mcse {
                hits += 1;
            }
        }
        assert!(hits >= 18, "only {hits}/20 within 3 rel-mcse");
    }

    #[test]
    fn flat_likelihood_estimates_log_one() {
        // a0 = 0 makes the target the initial prior itself, so c = 1.
        let model = ModelSpec::beta_bernoulli(2.0, 2.0).unwrap();
        let data = Dataset::bernoulli_counts(5, 10).unwrap();
        let target = PowerPriorTarget::new(&model, &data, 0.0, None).unwrap();
        let out = sample_power_posterior(&target, &ChainConfig::with_seed(9)).unwrap();
        let mut rng = chain_rng(9, 1000);
        let est = bridge_log_c(&target, &out, &BridgeConfig::default(), &mut rng).unwrap();
        assert!(est.log_c.abs() <= 3.0 * est.rel_mcse.max(1e-4), "log c {}", est.log_c);
    }

    #[test]
    fn estimator_is_affine_invariant() {
        // Push draws, proposal moments, proposal samples and the density
        // Jacobian through u → Au + b; every weight, and therefore the
        // estimate, must be unchanged.
        let a_mat = dmatrix![2.0, 0.5; 0.0, 1.2];
        let shift = DVector::from_column_slice(&[-0.7, 3.0]);
        let det: f64 = a_mat.determinant();
        let log_det_a = det.ln();

        // Unnormalised target: a 2-D standard normal offset by a constant.
        let log_f = |u: &DVector<f64>| 3.7 - 0.5 * u.norm_squared();
        let mut rng = chain_rng(12, 0);
        let post: Vec<DVector<f64>> = (0..800)
            .map(|_| DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let fit = ProposalFit::from_moments(
            DVector::zeros(2),
            DMatrix::identity(2, 2) * 1.21,
        )
        .unwrap();
        let prop: Vec<DVector<f64>> = (0..800).map(|_| fit.sample(&mut rng)).collect();

        let lw_post: Vec<f64> =
            post.iter().map(|u| log_f(u) - fit.log_density(u.as_slice())).collect();
        let lw_prop: Vec<f64> =
            prop.iter().map(|u| log_f(u) - fit.log_density(u.as_slice())).collect();

        let fit_t = ProposalFit::from_moments(
            &a_mat * &fit.mean + &shift,
            &a_mat * &fit.cov * a_mat.transpose(),
        )
        .unwrap();
        let a_inv = a_mat.clone().try_inverse().unwrap();
        let log_f_t = |v: &DVector<f64>| log_f(&(&a_inv * (v - &shift))) - log_det_a;
        let lw_post_t: Vec<f64> = post
            .iter()
            .map(|u| {
                let v = &a_mat * u + &shift;
                log_f_t(&v) - fit_t.log_density(v.as_slice())
            })
            .collect();
        let lw_prop_t: Vec<f64> = prop
            .iter()
            .map(|u| {
                let v = &a_mat * u + &shift;
                log_f_t(&v) - fit_t.log_density(v.as_slice())
            })
            .collect();

        let cfg = BridgeConfig::default();
        let plain = iterate_bridge(&lw_post, &lw_prop, 800.0, &cfg).unwrap();
        let mapped = iterate_bridge(&lw_post_t, &lw_prop_t, 800.0, &cfg).unwrap();
        assert!((plain.log_c - mapped.log_c).abs() < 1e-8);
    }

    #[test]
    fn relative_change_shrinks_after_first_iterations() {
        let model = ModelSpec::beta_bernoulli(1.0, 1.0).unwrap();
        let data = Dataset::bernoulli_counts(20, 100).unwrap();
        let target = PowerPriorTarget::new(&model, &data, 0.7, None).unwrap();
        let out = sample_power_posterior(&target, &ChainConfig::with_seed(3)).unwrap();
        let mut rng = chain_rng(3, 1000);
        let est = bridge_log_c(&target, &out, &BridgeConfig::default(), &mut rng).unwrap();
        assert!(est.iterations < 100, "took {} iterations", est.iterations);
    }

    #[test]
    fn non_convergence_is_an_error() {
        let lw_post = vec![0.0, 0.5, 1.0, 0.2];
        let lw_prop = vec![-40.0, -39.0, -41.0, -38.0];
        let cfg = BridgeConfig { tol: 1e-16, max_iter: 3, n_proposal: None };
        assert!(matches!(
            iterate_bridge(&lw_post, &lw_prop, 4.0, &cfg),
            Err(Error::BridgeNonConvergence(3))
        ));
    }
}
