//! Shared fixtures for the pipeline benchmarks.

use powerprior::data::Dataset;
use powerprior::ModelSpec;

/// The compatible-data Bernoulli configuration used across benchmarks.
pub fn bernoulli_fixture() -> (ModelSpec, Dataset, Dataset) {
    (
        ModelSpec::beta_bernoulli(1.0, 1.0).expect("valid prior"),
        Dataset::bernoulli_counts(20, 100).expect("valid data"),
        Dataset::bernoulli_counts(20, 100).expect("valid data"),
    )
}
