//! Versioned JSON run configuration and its resolution into core objects.

use nalgebra::{DMatrix, DVector};
use powerprior::data::{Dataset, ResponseKind};
use powerprior::grid::GridBudget;
use powerprior::mcmc::ChainConfig;
use powerprior::{A0Prior, Error, ModelSpec, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

fn config_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Model family plus initial-prior hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    BetaBernoulli { c: f64, d: f64 },
    GammaPoisson { alpha0: f64, beta0: f64 },
    NormalGamma { mu0: f64, kappa0: f64, alpha0: f64, beta0: f64 },
    NigRegression {
        mu0: Vec<f64>,
        /// Prior precision-scale matrix Λ0, row major.
        lambda0: Vec<Vec<f64>>,
        alpha0: f64,
        gamma0: f64,
    },
    LogisticRegression { n_covariates: usize },
}

impl ModelConfig {
    pub fn resolve(&self) -> Result<ModelSpec> {
        match self {
            ModelConfig::BetaBernoulli { c, d } => ModelSpec::beta_bernoulli(*c, *d),
            ModelConfig::GammaPoisson { alpha0, beta0 } => ModelSpec::gamma_poisson(*alpha0, *beta0),
            ModelConfig::NormalGamma { mu0, kappa0, alpha0, beta0 } => {
                ModelSpec::normal_gamma(*mu0, *kappa0, *alpha0, *beta0)
            }
            ModelConfig::NigRegression { mu0, lambda0, alpha0, gamma0 } => {
                let p = mu0.len();
                if lambda0.len() != p || lambda0.iter().any(|row| row.len() != p) {
                    return Err(config_err(format!("model.lambda0 must be a {p}x{p} matrix")));
                }
                let flat: Vec<f64> = lambda0.iter().flatten().copied().collect();
                ModelSpec::nig_regression(
                    DVector::from_column_slice(mu0),
                    DMatrix::from_row_slice(p, p, &flat),
                    *alpha0,
                    *gamma0,
                )
            }
            ModelConfig::LogisticRegression { n_covariates } => {
                ModelSpec::logistic_regression(*n_covariates)
            }
        }
    }

    fn response_kind(&self) -> ResponseKind {
        match self {
            ModelConfig::BetaBernoulli { .. } | ModelConfig::LogisticRegression { .. } => {
                ResponseKind::Binary
            }
            ModelConfig::GammaPoisson { .. } => ResponseKind::Count,
            _ => ResponseKind::Real,
        }
    }
}

/// Synthetic data-generating processes used by the scenario presets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Poisson { n: usize, lambda: f64, seed: u64 },
    Gaussian { n: usize, mean: f64, sd: f64, seed: u64 },
    /// Standard-normal covariates, y = Xβ + Normal(0, noise_sd²).
    LinearRegression { n: usize, coefficients: Vec<f64>, noise_sd: f64, seed: u64 },
    /// Standard-normal covariates, logit θ = α + Xβ.
    LogisticRegression { n: usize, intercept: f64, coefficients: Vec<f64>, seed: u64 },
}

impl Generator {
    pub fn generate(&self) -> Result<Dataset> {
        match self {
            Generator::Poisson { n, lambda, seed } => {
                if *lambda <= 0.0 {
                    return Err(config_err("poisson generator needs lambda > 0"));
                }
                let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                let dist = Poisson::<f64>::new(*lambda)
                    .map_err(|e| config_err(format!("poisson generator: {e}")))?;
                Dataset::counts((0..*n).map(|_| dist.sample(&mut rng) as u64).collect())
            }
            Generator::Gaussian { n, mean, sd, seed } => {
                let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                let dist = Normal::new(*mean, *sd)
                    .map_err(|e| config_err(format!("gaussian generator: {e}")))?;
                Dataset::reals((0..*n).map(|_| dist.sample(&mut rng)).collect())
            }
            Generator::LinearRegression { n, coefficients, noise_sd, seed } => {
                let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                let p = coefficients.len();
                let x = DMatrix::from_fn(*n, p, |_, _| StandardNormal.sample(&mut rng));
                let noise = Normal::new(0.0, *noise_sd)
                    .map_err(|e| config_err(format!("linear generator: {e}")))?;
                let beta = DVector::from_column_slice(coefficients);
                let mean: DVector<f64> = &x * beta;
                let y: Vec<f64> = (0..*n).map(|i| mean[i] + noise.sample(&mut rng)).collect();
                Dataset::regression(y, x)
            }
            Generator::LogisticRegression { n, intercept, coefficients, seed } => {
                let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                let p = coefficients.len();
                let x = DMatrix::from_fn(*n, p, |_, _| StandardNormal.sample(&mut rng));
                let beta = DVector::from_column_slice(coefficients);
                let eta: DVector<f64> = &x * beta;
                let y: Vec<u8> = (0..*n)
                    .map(|i| {
                        let prob = powerprior::math::sigmoid(intercept + eta[i]);
                        let b = Bernoulli::new(prob).expect("probability in (0,1)");
                        b.sample(&mut rng) as u8
                    })
                    .collect();
                Dataset::binary_regression(y, x)
            }
        }
    }
}

/// Where a dataset comes from: a CSV path, inline values, Bernoulli
/// sufficient statistics, or a seeded generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    Path(PathBuf),
    BernoulliCounts { successes: u64, trials: u64 },
    Counts(Vec<u64>),
    Reals(Vec<f64>),
    Generate(Generator),
}

impl DataConfig {
    pub fn resolve(&self, model: &ModelConfig, base_dir: &Path) -> Result<Dataset> {
        match self {
            DataConfig::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                if !path.exists() {
                    return Err(config_err(format!("data file does not exist: {}", path.display())));
                }
                Dataset::from_csv_path(path, model.response_kind())
            }
            DataConfig::BernoulliCounts { successes, trials } => {
                Dataset::bernoulli_counts(*successes, *trials)
            }
            DataConfig::Counts(values) => Dataset::counts(values.clone()),
            DataConfig::Reals(values) => Dataset::reals(values.clone()),
            DataConfig::Generate(g) => g.generate(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A0PriorConfig {
    pub eta: f64,
    pub nu: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
}

fn default_upper() -> f64 {
    1.0
}

impl A0PriorConfig {
    pub fn resolve(&self) -> Result<A0Prior> {
        A0Prior::new(self.eta, self.nu, self.upper)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GridStrategy {
    Adaptive,
    Uniform,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    Bridge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_j")]
    pub j: usize,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    #[serde(default = "default_v")]
    pub v1: f64,
    #[serde(default = "default_v")]
    pub v2: f64,
    #[serde(default = "default_strategy")]
    pub strategy: GridStrategy,
    #[serde(default = "default_backend")]
    pub backend: Backend,
}

fn default_j() -> usize {
    20
}
fn default_m() -> f64 {
    0.05
}
fn default_v() -> f64 {
    10.0
}
fn default_strategy() -> GridStrategy {
    GridStrategy::Adaptive
}
fn default_backend() -> Backend {
    Backend::Bridge
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            j: default_j(),
            m: default_m(),
            upper: default_upper(),
            v1: default_v(),
            v2: default_v(),
            strategy: default_strategy(),
            backend: default_backend(),
        }
    }
}

impl GridConfig {
    pub fn budget(&self) -> GridBudget {
        GridBudget { j: self.j, m: self.m, upper: self.upper, v1: self.v1, v2: self.v2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainsConfig {
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_iter")]
    pub n_iter: usize,
    #[serde(default = "default_warmup")]
    pub n_warmup: usize,
}

fn default_chains() -> usize {
    4
}
fn default_iter() -> usize {
    2000
}
fn default_warmup() -> usize {
    1000
}

impl Default for ChainsConfig {
    fn default() -> Self {
        Self { n_chains: default_chains(), n_iter: default_iter(), n_warmup: default_warmup() }
    }
}

impl ChainsConfig {
    pub fn resolve(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            n_chains: self.n_chains,
            n_iter: self.n_iter,
            n_warmup: self.n_warmup,
            seed,
            ..ChainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NormalisationMode {
    None,
    Exact,
    Dictionary,
}

/// The complete run configuration: one JSON document, versioned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub model: ModelConfig,
    pub historical: DataConfig,
    #[serde(default)]
    pub current: Option<DataConfig>,
    pub a0_prior: A0PriorConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_normalisation")]
    pub normalisation: NormalisationMode,
    /// Reuse a previously fitted dictionary instead of re-estimating.
    #[serde(default)]
    pub dictionary_path: Option<PathBuf>,
    #[serde(default)]
    pub chains: ChainsConfig,
    /// Evaluation points for `constants` and `sensitivity`.
    #[serde(default)]
    pub a0_list: Vec<f64>,
    /// Also fit the derivative-only variant and report the comparison.
    #[serde(default)]
    pub derivative_comparison: bool,
}

fn default_k() -> usize {
    20_000
}
fn default_normalisation() -> NormalisationMode {
    NormalisationMode::Dictionary
}

/// Config plus the resolved core objects.
pub struct Resolved {
    pub config: RunConfig,
    pub model: ModelSpec,
    pub historical: Dataset,
    pub current: Option<Dataset>,
    pub prior: A0Prior,
    pub chains: ChainConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| config_err(format!("config parse error at line {}, column {}: {e}", e.line(), e.column())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "unsupported config version {} (this build reads version {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolve(self, base_dir: &Path) -> Result<Resolved> {
        let model_spec = self.model.resolve()?;
        let historical = self.historical.resolve(&self.model, base_dir)?;
        let current = match &self.current {
            Some(c) => Some(c.resolve(&self.model, base_dir)?),
            None => None,
        };
        let prior = self.a0_prior.resolve()?;
        self.grid.budget().validate()?;
        let chains = self.chains.resolve(self.seed);
        chains.validate()?;
        // Surface family/data mismatches now rather than mid-pipeline.
        powerprior::PowerPriorTarget::new(&model_spec, &historical, 0.0, current.as_ref())?;
        Ok(Resolved { config: self, model: model_spec, historical, current, prior, chains })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{
                "version": 1,
                "seed": 7,
                "model": {"family": "beta_bernoulli", "c": 1.0, "d": 1.0},
                "historical": {"bernoulli_counts": {"successes": 20, "trials": 100}},
                "a0_prior": {"eta": 1.0, "nu": 1.0}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.k, 20_000);
        assert_eq!(cfg.grid.j, 20);
        assert_eq!(cfg.normalisation, NormalisationMode::Dictionary);
        let resolved = cfg.resolve(Path::new(".")).map_err(|e| e.to_string()).unwrap();
        assert_eq!(resolved.historical.n(), 100);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let err = RunConfig::from_json(
            r#"{"version": 99, "seed": 1,
                "model": {"family": "beta_bernoulli", "c": 1.0, "d": 1.0},
                "historical": {"bernoulli_counts": {"successes": 1, "trials": 2}},
                "a0_prior": {"eta": 1.0, "nu": 1.0}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RunConfig::from_json("{\n  \"version\": 1,\n  oops\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn missing_data_file_is_reported() {
        let cfg = RunConfig::from_json(
            r#"{"version": 1, "seed": 1,
                "model": {"family": "beta_bernoulli", "c": 1.0, "d": 1.0},
                "historical": {"path": "no-such-file.csv"},
                "a0_prior": {"eta": 1.0, "nu": 1.0}}"#,
        )
        .unwrap();
        let err = match cfg.resolve(Path::new("/tmp")) {
            Err(e) => e,
            Ok(_) => panic!("missing file accepted"),
        };
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let g = Generator::Poisson { n: 50, lambda: 2.0, seed: 11 };
        let a = g.generate().unwrap();
        let b = g.generate().unwrap();
        assert_eq!(a.stats().sum, b.stats().sum);

        let g = Generator::LogisticRegression {
            n: 40,
            intercept: 1.2,
            coefficients: vec![-1.0, 1.0, 0.5, -0.5],
            seed: 3,
        };
        let a = g.generate().unwrap();
        let b = g.generate().unwrap();
        assert_eq!(a.stats().sum, b.stats().sum);
        assert_eq!(a.n_covariates(), 4);
    }
}
