//! Prior on the discounting factor: a Beta(η, ν) rescaled to [0, upper].

use crate::error::{Error, Result};
use crate::math::{beta_cdf, beta_log_pdf, beta_quantile};
use rand::Rng;
use rand_distr::Distribution;

/// Beta(η, ν) prior for a0, rescaled to the interval [0, upper].
#[derive(Debug, Clone)]
pub struct A0Prior {
    pub eta: f64,
    pub nu: f64,
    pub upper: f64,
}

impl A0Prior {
    pub fn new(eta: f64, nu: f64, upper: f64) -> Result<Self> {
        if eta <= 0.0 || nu <= 0.0 {
            return Err(Error::InvalidArgument("Beta prior shapes must be positive".into()));
        }
        if !(upper > 0.0) {
            return Err(Error::InvalidArgument("prior support bound must be positive".into()));
        }
        Ok(Self { eta, nu, upper })
    }

    /// Flat prior on [0, 1].
    pub fn flat() -> Self {
        Self { eta: 1.0, nu: 1.0, upper: 1.0 }
    }

    pub fn log_density(&self, a0: f64) -> f64 {
        if !(0.0..=self.upper).contains(&a0) {
            return f64::NEG_INFINITY;
        }
        beta_log_pdf(a0 / self.upper, self.eta, self.nu) - self.upper.ln()
    }

    pub fn cdf(&self, a0: f64) -> f64 {
        beta_cdf(a0 / self.upper, self.eta, self.nu)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.upper * beta_quantile(p, self.eta, self.nu)
    }

    pub fn mean(&self) -> f64 {
        self.upper * self.eta / (self.eta + self.nu)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let b = rand_distr::Beta::new(self.eta, self.nu).expect("shapes validated");
        self.upper * b.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_prior_density_and_quantiles() {
        let p = A0Prior::flat();
        assert_relative_eq!(p.log_density(0.3), 0.0, epsilon = 1e-14);
        assert_relative_eq!(p.quantile(0.25), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rescaled_prior_normalises() {
        let p = A0Prior::new(2.0, 3.0, 10.0).unwrap();
        // density integrates to one over [0, 10] by trapezoid
        let k = 20_000;
        let h = 10.0 / k as f64;
        let total: f64 = (0..=k)
            .map(|i| {
                let x = i as f64 * h;
                let w = if i == 0 || i == k { 0.5 } else { 1.0 };
                w * p.log_density(x.clamp(1e-12, 10.0 - 1e-12)).exp()
            })
            .sum::<f64>()
            * h;
        assert_relative_eq!(total, 1.0, epsilon = 1e-4);
        assert_relative_eq!(p.cdf(p.quantile(0.8)), 0.8, epsilon = 1e-9);
    }
}
