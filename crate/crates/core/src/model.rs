//! Model families: log-likelihoods, initial priors and the power-prior
//! log-density a0·log L(D0|θ) + log π(θ) (+ log L(D|θ) for posteriors).

use crate::data::{Dataset, Observations};
use crate::error::{Error, Result};
use crate::math::{ln_1p_exp, logit, normal_log_pdf_prec, sigmoid, LN_2PI};
use crate::math::{beta_log_pdf, gamma_log_pdf, inv_gamma_log_pdf};
use nalgebra::{DMatrix, DVector};

/// Supported model families with the hyperparameters of their initial priors.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// Bernoulli likelihood, Beta(c, d) prior on the success probability.
    BetaBernoulli { c: f64, d: f64 },
    /// Poisson likelihood, Gamma(alpha0, beta0) prior on the rate.
    GammaPoisson { alpha0: f64, beta0: f64 },
    /// Gaussian likelihood in mean/precision form with a normal-Gamma prior:
    /// τ ~ Gamma(alpha0, beta0), μ | τ ~ Normal(mu0, (kappa0 τ)⁻¹).
    NormalGamma { mu0: f64, kappa0: f64, alpha0: f64, beta0: f64 },
    /// Linear regression with a normal-inverse-Gamma prior:
    /// σ² ~ InvGamma(alpha0, gamma0), β | σ² ~ Normal(mu0, σ² Λ0⁻¹).
    NigRegression { mu0: DVector<f64>, lambda0: DMatrix<f64>, alpha0: f64, gamma0: f64 },
    /// Logistic regression with standard-normal priors on the intercept and
    /// each of the `n_covariates` coefficients.
    LogisticRegression { n_covariates: usize },
}

/// Family tag, used for dispatch that does not need hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    BetaBernoulli,
    GammaPoisson,
    NormalGamma,
    NigRegression,
    LogisticRegression,
}

impl ModelSpec {
    pub fn beta_bernoulli(c: f64, d: f64) -> Result<Self> {
        if c <= 0.0 || d <= 0.0 {
            return Err(Error::InvalidArgument("Beta prior shapes must be positive".into()));
        }
        Ok(ModelSpec::BetaBernoulli { c, d })
    }

    pub fn gamma_poisson(alpha0: f64, beta0: f64) -> Result<Self> {
        if alpha0 <= 0.0 || beta0 <= 0.0 {
            return Err(Error::InvalidArgument("Gamma prior parameters must be positive".into()));
        }
        Ok(ModelSpec::GammaPoisson { alpha0, beta0 })
    }

    pub fn normal_gamma(mu0: f64, kappa0: f64, alpha0: f64, beta0: f64) -> Result<Self> {
        if kappa0 <= 0.0 || alpha0 <= 0.0 || beta0 <= 0.0 {
            return Err(Error::InvalidArgument("normal-Gamma scale/shape parameters must be positive".into()));
        }
        if !mu0.is_finite() {
            return Err(Error::InvalidArgument("prior mean must be finite".into()));
        }
        Ok(ModelSpec::NormalGamma { mu0, kappa0, alpha0, beta0 })
    }

    pub fn nig_regression(
        mu0: DVector<f64>,
        lambda0: DMatrix<f64>,
        alpha0: f64,
        gamma0: f64,
    ) -> Result<Self> {
        if alpha0 <= 0.0 || gamma0 <= 0.0 {
            return Err(Error::InvalidArgument("inverse-Gamma parameters must be positive".into()));
        }
        let p = mu0.len();
        if lambda0.nrows() != p || lambda0.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "Λ0 is {}×{} for a length-{p} mean",
                lambda0.nrows(),
                lambda0.ncols()
            )));
        }
        if p > 0 {
            let sym_err = (&lambda0 - lambda0.transpose()).abs().max();
            if sym_err > 1e-10 {
                return Err(Error::InvalidArgument("Λ0 must be symmetric".into()));
            }
            if lambda0.clone().cholesky().is_none() {
                return Err(Error::InvalidArgument("Λ0 must be positive definite".into()));
            }
        }
        Ok(ModelSpec::NigRegression { mu0, lambda0, alpha0, gamma0 })
    }

    pub fn logistic_regression(n_covariates: usize) -> Result<Self> {
        Ok(ModelSpec::LogisticRegression { n_covariates })
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::BetaBernoulli { .. } => Family::BetaBernoulli,
            ModelSpec::GammaPoisson { .. } => Family::GammaPoisson,
            ModelSpec::NormalGamma { .. } => Family::NormalGamma,
            ModelSpec::NigRegression { .. } => Family::NigRegression,
            ModelSpec::LogisticRegression { .. } => Family::LogisticRegression,
        }
    }

    /// Parameter dimension q of the constrained space.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::BetaBernoulli { .. } | ModelSpec::GammaPoisson { .. } => 1,
            ModelSpec::NormalGamma { .. } => 2,
            ModelSpec::NigRegression { mu0, .. } => mu0.len() + 1,
            ModelSpec::LogisticRegression { n_covariates } => n_covariates + 1,
        }
    }

    /// Parameter names in the order used by draw matrices and reports.
    pub fn param_names(&self) -> Vec<String> {
        match self {
            ModelSpec::BetaBernoulli { .. } => vec!["theta".into()],
            ModelSpec::GammaPoisson { .. } => vec!["lambda".into()],
            ModelSpec::NormalGamma { .. } => vec!["mu".into(), "tau".into()],
            ModelSpec::NigRegression { mu0, .. } => {
                let mut names: Vec<String> = (0..mu0.len()).map(|i| format!("beta{i}")).collect();
                names.push("sigma2".into());
                names
            }
            ModelSpec::LogisticRegression { n_covariates } => {
                let mut names = vec!["alpha".into()];
                names.extend((1..=*n_covariates).map(|i| format!("beta{i}")));
                names
            }
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        let ok = match self {
            ModelSpec::BetaBernoulli { .. } => {
                matches!(data.observations(), Observations::Binary(_)) && data.covariates().is_none()
            }
            ModelSpec::GammaPoisson { .. } => {
                matches!(data.observations(), Observations::Counts(_)) && data.covariates().is_none()
            }
            ModelSpec::NormalGamma { .. } => {
                matches!(data.observations(), Observations::Reals(_)) && data.covariates().is_none()
            }
            ModelSpec::NigRegression { mu0, .. } => {
                matches!(data.observations(), Observations::Reals(_))
                    && data.n_covariates() == mu0.len()
            }
            ModelSpec::LogisticRegression { n_covariates } => {
                matches!(data.observations(), Observations::Binary(_))
                    && data.n_covariates() == *n_covariates
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "dataset shape does not match the {:?} family",
                self.family()
            )))
        }
    }
}

/// Whether a parameter vector lives on the constrained (natural) space or the
/// unconstrained space used by random-walk kernels and bridge proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSpace {
    Constrained,
    Unconstrained,
}

/// A point in parameter space.
#[derive(Debug, Clone)]
pub struct ThetaPoint {
    pub values: Vec<f64>,
    pub space: ParamSpace,
}

impl ThetaPoint {
    pub fn constrained(values: Vec<f64>) -> Self {
        Self { values, space: ParamSpace::Constrained }
    }

    pub fn unconstrained(values: Vec<f64>) -> Self {
        Self { values, space: ParamSpace::Unconstrained }
    }
}

/// The unnormalised target density over θ at a fixed discounting factor: the
/// power prior kernel when no current data is attached, and the power
/// posterior kernel otherwise.
#[derive(Debug, Clone)]
pub struct PowerPriorTarget<'a> {
    pub model: &'a ModelSpec,
    pub historical: &'a Dataset,
    pub a0: f64,
    pub current: Option<&'a Dataset>,
}

impl<'a> PowerPriorTarget<'a> {
    pub fn new(
        model: &'a ModelSpec,
        historical: &'a Dataset,
        a0: f64,
        current: Option<&'a Dataset>,
    ) -> Result<Self> {
        if !(a0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("a0 must be non-negative, got {a0}")));
        }
        model.check_data(historical)?;
        if let Some(cur) = current {
            model.check_data(cur)?;
        }
        Ok(Self { model, historical, a0, current })
    }

    /// Unnormalised log-density at a constrained θ.
    pub fn log_density(&self, theta: &ThetaPoint) -> Result<f64> {
        log_power_density(self, theta)
    }

    /// Unnormalised log-density on the unconstrained space, transform
    /// log-Jacobian included.
    pub fn log_density_unconstrained(&self, u: &[f64]) -> Result<f64> {
        let point = ThetaPoint::unconstrained(u.to_vec());
        let (theta, log_jac) = transform_to_constrained(self.model, &point)?;
        Ok(log_power_density(self, &theta)? + log_jac)
    }
}

fn check_theta(model: &ModelSpec, theta: &ThetaPoint) -> Result<()> {
    if theta.space != ParamSpace::Constrained {
        return Err(Error::InvalidArgument("expected a constrained parameter point".into()));
    }
    if theta.values.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta has dimension {} but the model has {}",
            theta.values.len(),
            model.dim()
        )));
    }
    let in_support = match model {
        ModelSpec::BetaBernoulli { .. } => theta.values[0] > 0.0 && theta.values[0] < 1.0,
        ModelSpec::GammaPoisson { .. } => theta.values[0] > 0.0,
        ModelSpec::NormalGamma { .. } => theta.values[0].is_finite() && theta.values[1] > 0.0,
        ModelSpec::NigRegression { .. } => {
            let p = theta.values.len() - 1;
            theta.values[..p].iter().all(|v| v.is_finite()) && theta.values[p] > 0.0
        }
        ModelSpec::LogisticRegression { .. } => theta.values.iter().all(|v| v.is_finite()),
    };
    if in_support {
        Ok(())
    } else {
        Err(Error::OutsideSupport(format!("{:?}", theta.values)))
    }
}

/// Log-likelihood of `data` at a constrained θ, summed over observations.
pub fn log_likelihood(model: &ModelSpec, data: &Dataset, theta: &ThetaPoint) -> Result<f64> {
    check_theta(model, theta)?;
    model.check_data(data)?;
    let n = data.n() as f64;
    let stats = data.stats();
    let value = match model {
        ModelSpec::BetaBernoulli { .. } => {
            let th = theta.values[0];
            stats.sum * th.ln() + (n - stats.sum) * (1.0 - th).ln()
        }
        ModelSpec::GammaPoisson { .. } => {
            let lambda = theta.values[0];
            stats.sum * lambda.ln() - n * lambda - stats.sum_ln_factorial
        }
        ModelSpec::NormalGamma { .. } => {
            let (mu, tau) = (theta.values[0], theta.values[1]);
            let mean = stats.sum / n;
            let ssq = stats.centered_sum_sq + n * (mean - mu) * (mean - mu);
            0.5 * n * (tau.ln() - LN_2PI) - 0.5 * tau * ssq
        }
        ModelSpec::NigRegression { .. } => {
            let p = theta.values.len() - 1;
            let sigma2 = theta.values[p];
            let rss = if p == 0 {
                stats.sum_sq
            } else {
                let beta = DVector::from_column_slice(&theta.values[..p]);
                let xtx = stats.xtx.as_ref().expect("regression data has XtX");
                let xty = stats.xty.as_ref().expect("regression data has Xty");
                stats.sum_sq - 2.0 * beta.dot(xty) + (xtx * &beta).dot(&beta)
            };
            -0.5 * n * (LN_2PI + sigma2.ln()) - 0.5 * rss / sigma2
        }
        ModelSpec::LogisticRegression { .. } => {
            let alpha = theta.values[0];
            let beta = DVector::from_column_slice(&theta.values[1..]);
            let x = data.covariates().expect("logistic data has covariates");
            let eta = x * beta;
            let ys = match data.observations() {
                Observations::Binary(v) => v,
                _ => unreachable!("checked by check_data"),
            };
            ys.iter()
                .zip(eta.iter())
                .map(|(&y, &e)| {
                    let lin = alpha + e;
                    y as f64 * lin - ln_1p_exp(lin)
                })
                .sum()
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("non-finite log-likelihood at {:?}", theta.values)))
    }
}

/// Log-density of the (proper) initial prior at a constrained θ.
pub fn log_initial_prior(model: &ModelSpec, theta: &ThetaPoint) -> Result<f64> {
    check_theta(model, theta)?;
    let value = match model {
        ModelSpec::BetaBernoulli { c, d } => beta_log_pdf(theta.values[0], *c, *d),
        ModelSpec::GammaPoisson { alpha0, beta0 } => gamma_log_pdf(theta.values[0], *alpha0, *beta0),
        ModelSpec::NormalGamma { mu0, kappa0, alpha0, beta0 } => {
            let (mu, tau) = (theta.values[0], theta.values[1]);
            gamma_log_pdf(tau, *alpha0, *beta0) + normal_log_pdf_prec(mu, *mu0, *kappa0 * tau)
        }
        ModelSpec::NigRegression { mu0, lambda0, alpha0, gamma0 } => {
            let p = theta.values.len() - 1;
            let beta = DVector::from_column_slice(&theta.values[..p]);
            let sigma2 = theta.values[p];
            let diff = &beta - mu0;
            let quad = (lambda0 * &diff).dot(&diff);
            let log_det_l0 = lambda0
                .clone()
                .cholesky()
                .expect("Λ0 validated at construction")
                .l()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>()
                * 2.0;
            inv_gamma_log_pdf(sigma2, *alpha0, *gamma0)
                + 0.5 * (log_det_l0 - p as f64 * (LN_2PI + sigma2.ln()))
                - 0.5 * quad / sigma2
        }
        ModelSpec::LogisticRegression { .. } => theta
            .values
            .iter()
            .map(|&v| -0.5 * (LN_2PI + v * v))
            .sum(),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("non-finite log prior at {:?}", theta.values)))
    }
}

/// Unnormalised power-prior (or power-posterior) log-density:
/// a0·log L(D0|θ) + log π(θ) [+ log L(D|θ)].
pub fn log_power_density(target: &PowerPriorTarget, theta: &ThetaPoint) -> Result<f64> {
    let mut value = log_initial_prior(target.model, theta)?;
    if target.a0 != 0.0 {
        value += target.a0 * log_likelihood(target.model, target.historical, theta)?;
    }
    if let Some(cur) = target.current {
        value += log_likelihood(target.model, cur, theta)?;
    }
    Ok(value)
}

/// Map a constrained point to the unconstrained space.
///
/// Probabilities go through logit, positive scalars through log, real
/// coordinates through the identity. Returns the transformed point together
/// with log |dθ/du|, the Jacobian folded into densities evaluated on the
/// unconstrained side.
pub fn transform_to_unconstrained(model: &ModelSpec, theta: &ThetaPoint) -> Result<(ThetaPoint, f64)> {
    check_theta(model, theta)?;
    let mut u = theta.values.clone();
    let log_jac = apply_transform(model, &mut u, Direction::ToUnconstrained)?;
    Ok((ThetaPoint::unconstrained(u), log_jac))
}

/// Inverse of [`transform_to_unconstrained`]; also returns log |dθ/du|.
pub fn transform_to_constrained(model: &ModelSpec, point: &ThetaPoint) -> Result<(ThetaPoint, f64)> {
    if point.space != ParamSpace::Unconstrained {
        return Err(Error::InvalidArgument("expected an unconstrained parameter point".into()));
    }
    if point.values.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has dimension {} but the model has {}",
            point.values.len(),
            model.dim()
        )));
    }
    let mut theta = point.values.clone();
    let log_jac = apply_transform(model, &mut theta, Direction::ToConstrained)?;
    Ok((ThetaPoint::constrained(theta), log_jac))
}

enum Direction {
    ToUnconstrained,
    ToConstrained,
}

/// Per-coordinate map; returns log |dθ/du| evaluated at the point.
fn apply_transform(model: &ModelSpec, values: &mut [f64], dir: Direction) -> Result<f64> {
    enum Kind {
        Logit,
        Log,
        Identity,
    }
    let kind_of = |i: usize| match model {
        ModelSpec::BetaBernoulli { .. } => Kind::Logit,
        ModelSpec::GammaPoisson { .. } => Kind::Log,
        ModelSpec::NormalGamma { .. } => {
            if i == 0 {
                Kind::Identity
            } else {
                Kind::Log
            }
        }
        ModelSpec::NigRegression { mu0, .. } => {
            if i < mu0.len() {
                Kind::Identity
            } else {
                Kind::Log
            }
        }
        ModelSpec::LogisticRegression { .. } => Kind::Identity,
    };
    let mut log_jac = 0.0;
    for i in 0..values.len() {
        match (kind_of(i), &dir) {
            (Kind::Logit, Direction::ToUnconstrained) => {
                let th = values[i];
                if th <= 0.0 || th >= 1.0 {
                    return Err(Error::OutsideSupport(format!("probability {th} on the boundary")));
                }
                log_jac += th.ln() + (1.0 - th).ln();
                values[i] = logit(th);
            }
            (Kind::Logit, Direction::ToConstrained) => {
                let th = sigmoid(values[i]);
                log_jac += th.ln() + (1.0 - th).ln();
                values[i] = th;
            }
            (Kind::Log, Direction::ToUnconstrained) => {
                if values[i] <= 0.0 {
                    return Err(Error::OutsideSupport(format!("non-positive scale {}", values[i])));
                }
                log_jac += values[i].ln();
                values[i] = values[i].ln();
            }
            (Kind::Log, Direction::ToConstrained) => {
                log_jac += values[i];
                values[i] = values[i].exp();
            }
            (Kind::Identity, _) => {}
        }
    }
    Ok(log_jac)
}
