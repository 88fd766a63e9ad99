//! Power priors with estimated normalising constants.
//!
//! A power prior discounts a historical-data likelihood by a factor a0 and
//! multiplies it into an initial prior. Treating a0 as a parameter requires
//! the normalising constant c(a0) of that prior, which this crate computes
//! exactly for conjugate families and estimates elsewhere via a pipeline of
//! power-posterior MCMC, bridge sampling, an adaptive evaluation grid and a
//! spline-backed lookup dictionary. The resulting dictionary normalises the
//! joint posterior of (θ, a0), from which the [`posterior`] module samples.
//!
//! Module map:
//! - [`data`], [`model`]: datasets, model families, power-prior densities
//! - [`conjugate`]: closed-form c(a0), derivatives, exact samplers
//! - [`quad`]: deterministic quadrature oracle and density tables
//! - [`mcmc`]: power-posterior sampling and convergence diagnostics
//! - [`bridge`]: bridge-sampling estimates of log c(a0)
//! - [`grid`]: budgeted adaptive/uniform evaluation grids
//! - [`curvefit`]: spline fits, prediction dictionaries, error metrics
//! - [`posterior`]: joint (θ, a0) sampling, exact marginals, sensitivity

pub mod a0prior;
pub mod bridge;
pub mod conjugate;
pub mod curvefit;
pub mod data;
pub mod error;
pub mod grid;
pub mod math;
pub mod mcmc;
pub mod model;
pub mod posterior;
pub mod quad;

pub use a0prior::A0Prior;
pub use data::{Dataset, Observations, ResponseKind};
pub use error::{Error, Result};
pub use model::{Family, ModelSpec, ParamSpace, PowerPriorTarget, ThetaPoint};
