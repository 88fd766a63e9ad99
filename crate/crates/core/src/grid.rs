//! Budgeted construction of the l(a0) estimation grid.
//!
//! The builder spends exactly J evaluator calls. It first probes the
//! endpoints m and M. If the derivative signs match (or the family is known
//! monotone) the remaining budget fills a regular grid; otherwise a
//! bisection walks toward the sign change of l'(a0) until the step drops
//! below v1·m, after which the leftover budget plugs the widest gaps inside
//! a ±v2·m window around the last bisection point. The analytic point
//! (0, l = 0) is always included and never counts against the budget.

use crate::a0prior::A0Prior;
use crate::bridge::{bridge_log_c, BridgeConfig};
use crate::conjugate::ConjugateConstants;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mcmc::{chain_rng, estimate_l_prime, run_gated, sample_power_posterior, ChainConfig};
use crate::model::{Family, ModelSpec, PowerPriorTarget};
use rayon::prelude::*;
use std::io::Write;

/// Evaluation budget and bisection window constants.
#[derive(Debug, Clone)]
pub struct GridBudget {
    /// Total number of evaluator calls.
    pub j: usize,
    /// Lower endpoint of the evaluation range.
    pub m: f64,
    /// Upper endpoint of the evaluation range.
    pub upper: f64,
    /// Bisection stops once the step is below v1·m.
    pub v1: f64,
    /// Gaps are plugged inside ±v2·m of the last bisection point.
    pub v2: f64,
}

impl Default for GridBudget {
    fn default() -> Self {
        Self { j: 20, m: 0.05, upper: 1.0, v1: 10.0, v2: 10.0 }
    }
}

impl GridBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m < self.upper) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < m < M, got m={}, M={}",
                self.m, self.upper
            )));
        }
        if self.j < 3 {
            return Err(Error::InvalidArgument("evaluation budget must be at least 3".into()));
        }
        if self.v1 <= 0.0 || self.v2 <= 0.0 {
            return Err(Error::InvalidArgument("v1 and v2 must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluation of l(a0): the estimate, optional derivative and errors.
#[derive(Debug, Clone, Copy)]
pub struct EvalPoint {
    pub l: f64,
    pub l_se: f64,
    pub l_prime: Option<f64>,
    pub l_prime_se: Option<f64>,
}

/// A backend that evaluates l(a0) (and l'(a0)) at a requested point.
///
/// Implementations must be deterministic for a fixed configuration: the same
/// a0 always returns the same estimate, regardless of call order.
pub trait Evaluator: Sync {
    fn eval(&self, a0: f64) -> Result<EvalPoint>;

    /// l'(0) when the backend can supply it analytically.
    fn l_prime_at_zero(&self) -> Option<(f64, f64)> {
        None
    }

    fn backend(&self) -> &'static str;
}

/// Closed-form backend for conjugate families: exact values, zero error.
pub struct ClosedFormEvaluator {
    constants: ConjugateConstants,
}

impl ClosedFormEvaluator {
    pub fn new(model: &ModelSpec, historical: &Dataset) -> Result<Self> {
        Ok(Self { constants: ConjugateConstants::new(model, historical)? })
    }

    pub fn constants(&self) -> &ConjugateConstants {
        &self.constants
    }
}

impl Evaluator for ClosedFormEvaluator {
    fn eval(&self, a0: f64) -> Result<EvalPoint> {
        Ok(EvalPoint {
            l: self.constants.log_c(a0),
            l_se: 0.0,
            l_prime: Some(self.constants.log_c_prime(a0)),
            l_prime_se: Some(0.0),
        })
    }

    fn l_prime_at_zero(&self) -> Option<(f64, f64)> {
        Some((self.constants.log_c_prime(0.0), 0.0))
    }

    fn backend(&self) -> &'static str {
        "closed_form"
    }
}

/// MCMC + bridge backend: power-posterior draws feed both the bridge
/// estimate of l(a0) and the free derivative estimate l'(a0).
pub struct BridgeEvaluator<'a> {
    pub model: &'a ModelSpec,
    pub historical: &'a Dataset,
    pub chain_cfg: ChainConfig,
    pub bridge_cfg: BridgeConfig,
    pub seed: u64,
}

impl<'a> BridgeEvaluator<'a> {
    pub fn new(model: &'a ModelSpec, historical: &'a Dataset, seed: u64) -> Self {
        Self {
            model,
            historical,
            chain_cfg: ChainConfig::with_seed(seed),
            bridge_cfg: BridgeConfig::default(),
            seed,
        }
    }
}

/// Stable per-point seed so evaluations are independent of call order.
fn point_seed(seed: u64, a0: f64) -> u64 {
    let mut z = seed ^ a0.to_bits();
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Evaluator for BridgeEvaluator<'_> {
    fn eval(&self, a0: f64) -> Result<EvalPoint> {
        let target = PowerPriorTarget::new(self.model, self.historical, a0, None)?;
        let cfg = ChainConfig { seed: point_seed(self.seed, a0), ..self.chain_cfg.clone() };
        let (out, _) = run_gated(&cfg, |c| sample_power_posterior(&target, c))?;
        let (lp, lp_se) = estimate_l_prime(&out)?;
        // Proposal draws come from a stream disjoint from the chain streams.
        let mut rng = chain_rng(point_seed(self.seed, a0), u64::from(u32::MAX));
        let est = bridge_log_c(&target, &out, &self.bridge_cfg, &mut rng)?;
        Ok(EvalPoint { l: est.log_c, l_se: est.rel_mcse, l_prime: Some(lp), l_prime_se: Some(lp_se) })
    }

    fn backend(&self) -> &'static str {
        "bridge+mcmc"
    }
}

/// How a grid point came to be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointPhase {
    /// The analytic anchor (0, 0).
    Free,
    /// Endpoint probe at m or M.
    Endpoint,
    /// Bisection midpoint.
    Bisection,
    /// Gap plugging after bisection stopped.
    GapFill,
    /// Regular-grid fill.
    Uniform,
}

impl PointPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointPhase::Free => "free",
            PointPhase::Endpoint => "endpoint",
            PointPhase::Bisection => "bisection",
            PointPhase::GapFill => "gap",
            PointPhase::Uniform => "uniform",
        }
    }
}

/// One visited a0 with its estimates.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub a0: f64,
    pub l: f64,
    pub l_se: f64,
    pub l_prime: Option<f64>,
    pub l_prime_se: Option<f64>,
    pub phase: PointPhase,
}

/// Which branch the builder took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Bisection,
    Uniform,
}

/// Visited a0 values with aligned estimates, sorted and strictly increasing.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    pub mode: GridMode,
    pub backend: &'static str,
}

impl GridResult {
    pub fn zs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.a0).collect()
    }

    pub fn fs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.l).collect()
    }

    pub fn upper(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.a0)
    }

    fn push_sorted(points: &mut Vec<GridPoint>, p: GridPoint) -> Result<()> {
        if points.iter().any(|q| q.a0 == p.a0) {
            return Err(Error::Numerical(format!("duplicate grid point at a0 = {}", p.a0)));
        }
        points.push(p);
        points.sort_by(|a, b| a.a0.total_cmp(&b.a0));
        Ok(())
    }

    /// CSV with columns a0, l_hat, l_prime_hat, l_se, l_prime_se, phase.
    pub fn to_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "a0,l_hat,l_prime_hat,l_se,l_prime_se,phase")?;
        for p in &self.points {
            let prime = p.l_prime.map_or(String::new(), |v| format!("{v:.16e}"));
            let prime_se = p.l_prime_se.map_or(String::new(), |v| format!("{v:.16e}"));
            writeln!(
                w,
                "{:.16e},{:.16e},{},{:.16e},{},{}",
                p.a0,
                p.l,
                prime,
                p.l_se,
                prime_se,
                p.phase.as_str()
            )?;
        }
        Ok(())
    }
}

/// Largest grid value from the prior: the p-quantile of the a0 prior.
pub fn choose_m_from_prior(prior: &A0Prior, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must be in (0, 1), got {p}")));
    }
    Ok(prior.quantile(p))
}

/// Discrete likelihoods have monotonically decreasing c(a0), so the sign of
/// l' never changes and the regular grid is the right design.
pub fn is_monotone_family(model: &ModelSpec) -> bool {
    matches!(
        model.family(),
        Family::BetaBernoulli | Family::GammaPoisson | Family::LogisticRegression
    )
}

fn eval_to_point(a0: f64, e: EvalPoint, phase: PointPhase) -> GridPoint {
    GridPoint { a0, l: e.l, l_se: e.l_se, l_prime: e.l_prime, l_prime_se: e.l_prime_se, phase }
}

fn free_anchor(eval: &dyn Evaluator) -> GridPoint {
    let (lp, lp_se) = match eval.l_prime_at_zero() {
        Some((v, se)) => (Some(v), Some(se)),
        None => (None, None),
    };
    GridPoint { a0: 0.0, l: 0.0, l_se: 0.0, l_prime: lp, l_prime_se: lp_se, phase: PointPhase::Free }
}

/// A derivative sign is only trusted when it clears three standard errors;
/// anything else is undetermined and forces the regular-grid branch.
fn determined_sign(e: &EvalPoint) -> Option<f64> {
    let lp = e.l_prime?;
    let se = e.l_prime_se.unwrap_or(0.0);
    if lp.abs() > 3.0 * se {
        Some(lp.signum())
    } else {
        None
    }
}

/// Build the estimation grid with the bisection-type search, spending
/// exactly `budget.j` evaluator calls.
pub fn build_adaptive_grid(
    eval: &dyn Evaluator,
    budget: &GridBudget,
    monotone_hint: bool,
) -> Result<GridResult> {
    budget.validate()?;
    let mut points = Vec::with_capacity(budget.j + 1);
    points.push(free_anchor(eval));

    let at_m = eval.eval(budget.m)?;
    let at_upper = eval.eval(budget.upper)?;
    GridResult::push_sorted(&mut points, eval_to_point(budget.m, at_m, PointPhase::Endpoint))?;
    GridResult::push_sorted(&mut points, eval_to_point(budget.upper, at_upper, PointPhase::Endpoint))?;
    let mut remaining = budget.j - 2;

    let sign_m = determined_sign(&at_m);
    let sign_upper = determined_sign(&at_upper);
    let same_sign = match (sign_m, sign_upper) {
        (Some(a), Some(b)) => a == b,
        // Undetermined endpoint signs: fall back to the regular grid.
        _ => true,
    };

    if monotone_hint || same_sign {
        fill_uniform_interior(eval, budget, &mut points, remaining)?;
        return Ok(GridResult { points, mode: GridMode::Uniform, backend: eval.backend() });
    }

    // Bisection toward the sign change of l'.
    let sign_at_m = sign_m.expect("checked above");
    let (mut lo, mut hi) = (budget.m, budget.upper);
    let mut prev_z: Option<f64> = None;
    let mut last_z;
    while remaining > 0 {
        let z = 0.5 * (lo + hi);
        let e = eval.eval(z)?;
        GridResult::push_sorted(&mut points, eval_to_point(z, e, PointPhase::Bisection))?;
        remaining -= 1;
        last_z = z;
        let sign_z = e.l_prime.map_or(sign_at_m, f64::signum);
        if sign_z == sign_at_m {
            lo = z;
        } else {
            hi = z;
        }
        // The step is only defined from the second midpoint onward.
        let delta = prev_z.map_or(f64::INFINITY, |p| (z - p).abs());
        prev_z = Some(z);
        if remaining == 0 {
            break;
        }
        if delta < budget.v1 * budget.m {
            plug_gaps(eval, budget, &mut points, &mut remaining, last_z)?;
            break;
        }
    }
    Ok(GridResult { points, mode: GridMode::Bisection, backend: eval.backend() })
}

fn fill_uniform_interior(
    eval: &dyn Evaluator,
    budget: &GridBudget,
    points: &mut Vec<GridPoint>,
    remaining: usize,
) -> Result<()> {
    // Interior points completing a regular grid of `remaining + 2` values
    // from m to M inclusive.
    let step = (budget.upper - budget.m) / (remaining + 1) as f64;
    let targets: Vec<f64> = (1..=remaining).map(|k| budget.m + step * k as f64).collect();
    let evals: Vec<Result<EvalPoint>> =
        targets.par_iter().map(|&a0| eval.eval(a0)).collect();
    for (a0, e) in targets.into_iter().zip(evals) {
        GridResult::push_sorted(points, eval_to_point(a0, e?, PointPhase::Uniform))?;
    }
    Ok(())
}

fn plug_gaps(
    eval: &dyn Evaluator,
    budget: &GridBudget,
    points: &mut Vec<GridPoint>,
    remaining: &mut usize,
    centre: f64,
) -> Result<()> {
    let window_lo = (centre - budget.v2 * budget.m).max(0.0);
    let window_hi = (centre + budget.v2 * budget.m).min(budget.upper);
    while *remaining > 0 {
        let zs: Vec<f64> = points.iter().map(|p| p.a0).collect();
        let mut best: Option<(f64, f64, f64)> = None; // (width, lo, hi)
        for w in zs.windows(2) {
            if w[0] >= window_lo && w[1] <= window_hi {
                let width = w[1] - w[0];
                let better = match best {
                    None => true,
                    // Strict improvement only, so ties resolve to smaller a0.
                    Some((bw, _, _)) => width > bw,
                };
                if better {
                    best = Some((width, w[0], w[1]));
                }
            }
        }
        let (_, g_lo, g_hi) = match best {
            Some(b) => b,
            // No pair fully inside the window; take the widest gap touching it.
            None => {
                let mut fallback: Option<(f64, f64, f64)> = None;
                for w in zs.windows(2) {
                    if w[1] > window_lo && w[0] < window_hi {
                        let width = w[1] - w[0];
                        if fallback.map_or(true, |(bw, _, _)| width > bw) {
                            fallback = Some((width, w[0], w[1]));
                        }
                    }
                }
                fallback.ok_or_else(|| Error::Numerical("no gap available for plugging".into()))?
            }
        };
        let z = 0.5 * (g_lo + g_hi);
        let e = eval.eval(z)?;
        GridResult::push_sorted(points, eval_to_point(z, e, PointPhase::GapFill))?;
        *remaining -= 1;
    }
    Ok(())
}

/// J evenly spaced evaluations on [m, M] plus the free (0, 0) anchor.
pub fn build_uniform_grid(eval: &dyn Evaluator, budget: &GridBudget) -> Result<GridResult> {
    budget.validate()?;
    let mut points = Vec::with_capacity(budget.j + 1);
    points.push(free_anchor(eval));
    let step = (budget.upper - budget.m) / (budget.j - 1) as f64;
    let targets: Vec<f64> = (0..budget.j)
        .map(|k| if k + 1 == budget.j { budget.upper } else { budget.m + step * k as f64 })
        .collect();
    let evals: Vec<Result<EvalPoint>> = targets.par_iter().map(|&a0| eval.eval(a0)).collect();
    for (a0, e) in targets.into_iter().zip(evals) {
        GridResult::push_sorted(&mut points, eval_to_point(a0, e?, PointPhase::Uniform))?;
    }
    Ok(GridResult { points, mode: GridMode::Uniform, backend: eval.backend() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Noiseless synthetic evaluator with an exact derivative, counting calls.
    struct Synthetic<F, G> {
        f: F,
        fp: G,
        calls: AtomicUsize,
    }

    impl<F: Fn(f64) -> f64 + Sync, G: Fn(f64) -> f64 + Sync> Synthetic<F, G> {
        fn new(f: F, fp: G) -> Self {
            Self { f, fp, calls: AtomicUsize::new(0) }
        }
    }

    impl<F: Fn(f64) -> f64 + Sync, G: Fn(f64) -> f64 + Sync> Evaluator for Synthetic<F, G> {
        fn eval(&self, a0: f64) -> Result<EvalPoint> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(EvalPoint {
                l: (self.f)(a0),
                l_se: 0.0,
                l_prime: Some((self.fp)(a0)),
                l_prime_se: Some(0.0),
            })
        }

        fn backend(&self) -> &'static str {
            "closed_form"
        }
    }

    #[test]
    fn parabola_bisection_brackets_the_minimum() {
        let eval = Synthetic::new(|a: f64| (a - 3.0) * (a - 3.0), |a: f64| 2.0 * (a - 3.0));
        let budget = GridBudget { j: 20, m: 0.05, upper: 10.0, ..Default::default() };
        let grid = build_adaptive_grid(&eval, &budget, false).unwrap();
        assert_eq!(grid.mode, GridMode::Bisection);
        assert_eq!(eval.calls.load(Ordering::SeqCst), 20);
        // Bisection points on either side of 3 within v1·m = 0.5 of it.
        let near: Vec<f64> = grid
            .points
            .iter()
            .filter(|p| matches!(p.phase, PointPhase::Bisection))
            .map(|p| p.a0)
            .filter(|a| (a - 3.0).abs() <= 0.5)
            .collect();
        assert!(!near.is_empty(), "no bisection point within 0.5 of the sign change");
        let zs = grid.zs();
        assert!(zs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(zs[0], 0.0);
        assert!(grid.points.len() <= 21);
    }

    #[test]
    fn final_bracket_width_bound_holds() {
        let eval = Synthetic::new(|a: f64| (a - 3.0) * (a - 3.0), |a: f64| 2.0 * (a - 3.0));
        let budget = GridBudget { j: 20, m: 0.05, upper: 10.0, ..Default::default() };
        let grid = build_adaptive_grid(&eval, &budget, false).unwrap();
        // The tightest pair of visited points straddling 3.
        let zs = grid.zs();
        let lo = zs.iter().filter(|z| **z < 3.0).cloned().fold(f64::MIN, f64::max);
        let hi = zs.iter().filter(|z| **z > 3.0).cloned().fold(f64::MAX, f64::min);
        let bound = (budget.v1 * budget.m).max((budget.upper - budget.m) / 2f64.powi(18));
        assert!(hi - lo <= bound, "bracket [{lo}, {hi}] wider than {bound}");
    }

    #[test]
    fn same_sign_forces_regular_grid() {
        let eval = Synthetic::new(|a: f64| -2.0 * a, |_| -2.0);
        let budget = GridBudget::default();
        let grid = build_adaptive_grid(&eval, &budget, false).unwrap();
        assert_eq!(grid.mode, GridMode::Uniform);
        assert_eq!(eval.calls.load(Ordering::SeqCst), 20);
        let zs = grid.zs();
        assert_eq!(zs.len(), 21);
        let step = (budget.upper - budget.m) / (budget.j - 1) as f64;
        for (k, z) in zs[1..].iter().enumerate() {
            assert_relative_eq!(*z, budget.m + step * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_hint_skips_sign_probe_logic() {
        let eval = Synthetic::new(|a: f64| (a - 0.4) * (a - 0.4), |a: f64| 2.0 * (a - 0.4));
        let grid = build_adaptive_grid(&eval, &GridBudget::default(), true).unwrap();
        assert_eq!(grid.mode, GridMode::Uniform);
        assert_eq!(eval.calls.load(Ordering::SeqCst), 20);
    }

    #[test]
    fn undetermined_endpoint_sign_falls_back_to_uniform() {
        struct Noisy;
        impl Evaluator for Noisy {
            fn eval(&self, a0: f64) -> Result<EvalPoint> {
                Ok(EvalPoint {
                    l: -a0,
                    l_se: 0.1,
                    l_prime: Some(0.001),
                    l_prime_se: Some(0.1), // |l'| < 3·se everywhere
                })
            }
            fn backend(&self) -> &'static str {
                "bridge+mcmc"
            }
        }
        let grid = build_adaptive_grid(&Noisy, &GridBudget::default(), false).unwrap();
        assert_eq!(grid.mode, GridMode::Uniform);
    }

    #[test]
    fn uniform_grid_j3_matches_hand_values() {
        let eval = Synthetic::new(|a: f64| -a, |_| -1.0);
        let budget = GridBudget { j: 3, ..Default::default() };
        let grid = build_uniform_grid(&eval, &budget).unwrap();
        let zs = grid.zs();
        assert_eq!(zs.len(), 4);
        assert_relative_eq!(zs[0], 0.0);
        assert_relative_eq!(zs[1], 0.05);
        assert_relative_eq!(zs[2], 0.525);
        assert_relative_eq!(zs[3], 1.0);
        assert_eq!(eval.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gap_plugging_spends_the_whole_budget() {
        let eval = Synthetic::new(|a: f64| (a - 3.0) * (a - 3.0), |a: f64| 2.0 * (a - 3.0));
        for j in [5usize, 8, 12, 20, 33] {
            eval.calls.store(0, Ordering::SeqCst);
            let budget = GridBudget { j, m: 0.05, upper: 10.0, ..Default::default() };
            let grid = build_adaptive_grid(&eval, &budget, false).unwrap();
            assert_eq!(eval.calls.load(Ordering::SeqCst), j, "budget audit failed at J={j}");
            assert_eq!(grid.points.len(), j + 1);
        }
    }

    #[test]
    fn quantile_rule_for_the_upper_endpoint() {
        let flat = A0Prior::flat();
        assert_relative_eq!(choose_m_from_prior(&flat, 0.9999).unwrap(), 0.9999, epsilon = 1e-10);
        let peaked = A0Prior::new(200.0, 1.0, 1.0).unwrap();
        let q = choose_m_from_prior(&peaked, 0.5).unwrap();
        assert!((peaked.cdf(q) - 0.5).abs() < 1e-10);
        assert!(choose_m_from_prior(&flat, 1.0 - 1e-13).unwrap() > 0.999999);
        assert!(choose_m_from_prior(&flat, 1.0).is_err());
    }

    #[test]
    fn monotone_families() {
        assert!(is_monotone_family(&ModelSpec::beta_bernoulli(1.0, 1.0).unwrap()));
        assert!(is_monotone_family(&ModelSpec::gamma_poisson(1.0, 1.0).unwrap()));
        assert!(is_monotone_family(&ModelSpec::logistic_regression(2).unwrap()));
        assert!(!is_monotone_family(&ModelSpec::normal_gamma(0.0, 1.0, 1.0, 1.0).unwrap()));
        let nig = ModelSpec::nig_regression(
            nalgebra::DVector::zeros(1),
            nalgebra::DMatrix::identity(1, 1),
            1.0,
            1.0,
        )
        .unwrap();
        assert!(!is_monotone_family(&nig));
    }

    #[test]
    fn csv_round_trip_shape() {
        let eval = Synthetic::new(|a: f64| -a, |_| -1.0);
        let grid = build_uniform_grid(&eval, &GridBudget { j: 4, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        grid.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a0,l_hat,l_prime_hat,l_se,l_prime_se,phase");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].ends_with(",free"));
    }

    #[test]
    fn evaluator_failure_propagates() {
        struct Failing;
        impl Evaluator for Failing {
            fn eval(&self, a0: f64) -> Result<EvalPoint> {
                if a0 > 0.9 {
                    Err(Error::Numerical("backend blew up".into()))
                } else {
                    Ok(EvalPoint { l: 0.0, l_se: 0.0, l_prime: Some(-1.0), l_prime_se: Some(0.0) })
                }
            }
            fn backend(&self) -> &'static str {
                "closed_form"
            }
        }
        assert!(build_adaptive_grid(&Failing, &GridBudget::default(), false).is_err());
    }
}
