//! Datasets: historical (D0) or current (D) observations with cached
//! sufficient statistics.
//!
//! All model families consume only the statistics precomputed here (sums,
//! sums of squares, log-factorials, cross-products), so a dataset is
//! validated and summarised once at construction and is immutable afterwards.

use crate::error::{Error, Result};
use crate::math::ln_factorial;
use nalgebra::{DMatrix, DVector};
use std::io::Read;
use std::path::Path;

/// Observation payload, tagged by response type.
#[derive(Debug, Clone)]
pub enum Observations {
    /// Binary outcomes in {0, 1}.
    Binary(Vec<u8>),
    /// Non-negative counts.
    Counts(Vec<u64>),
    /// Real-valued responses.
    Reals(Vec<f64>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Binary(v) => v.len(),
            Observations::Counts(v) => v.len(),
            Observations::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Expected response type when loading a dataset from CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Binary,
    Count,
    Real,
}

/// Cached sufficient statistics, populated according to the payload type.
#[derive(Debug, Clone, Default)]
pub struct SufficientStats {
    /// Σ yᵢ (successes, count total, or real sum).
    pub sum: f64,
    /// Σ yᵢ² for real responses.
    pub sum_sq: f64,
    /// Σ (yᵢ - ȳ)² for real responses.
    pub centered_sum_sq: f64,
    /// Σ ln(yᵢ!) for count responses.
    pub sum_ln_factorial: f64,
    /// XᵀX when covariates are present.
    pub xtx: Option<DMatrix<f64>>,
    /// Xᵀy when covariates are present.
    pub xty: Option<DVector<f64>>,
}

/// A set of observations with optional covariates and cached statistics.
#[derive(Debug, Clone)]
pub struct Dataset {
    obs: Observations,
    covariates: Option<DMatrix<f64>>,
    stats: SufficientStats,
}

impl Dataset {
    /// Binary observations without covariates.
    pub fn binary(values: Vec<u8>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one observation".into()));
        }
        if let Some(bad) = values.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("binary observation {bad} is not in {{0, 1}}")));
        }
        let sum = values.iter().map(|&v| v as f64).sum();
        Ok(Self {
            obs: Observations::Binary(values),
            covariates: None,
            stats: SufficientStats { sum, ..Default::default() },
        })
    }

    /// Binary dataset given by its sufficient statistics (successes out of trials).
    pub fn bernoulli_counts(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument("dataset must contain at least one observation".into()));
        }
        if successes > trials {
            return Err(Error::InvalidArgument(format!("{successes} successes out of {trials} trials")));
        }
        let mut values = vec![1u8; successes as usize];
        values.extend(std::iter::repeat(0u8).take((trials - successes) as usize));
        Self::binary(values)
    }

    /// Count observations without covariates.
    pub fn counts(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one observation".into()));
        }
        let sum = values.iter().map(|&v| v as f64).sum();
        let sum_ln_factorial = values.iter().map(|&v| ln_factorial(v)).sum();
        Ok(Self {
            obs: Observations::Counts(values),
            covariates: None,
            stats: SufficientStats { sum, sum_ln_factorial, ..Default::default() },
        })
    }

    /// Real observations without covariates.
    pub fn reals(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one observation".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite real observation".into()));
        }
        let n = values.len() as f64;
        let sum: f64 = values.iter().sum();
        let mean = sum / n;
        let sum_sq = values.iter().map(|v| v * v).sum();
        let centered_sum_sq = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok(Self {
            obs: Observations::Reals(values),
            covariates: None,
            stats: SufficientStats { sum, sum_sq, centered_sum_sq, ..Default::default() },
        })
    }

    /// Real responses with an N×P covariate matrix (linear regression).
    pub fn regression(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        let mut ds = Self::reals(y)?;
        ds.attach_covariates(x)?;
        Ok(ds)
    }

    /// Binary responses with an N×P covariate matrix (logistic regression).
    pub fn binary_regression(y: Vec<u8>, x: DMatrix<f64>) -> Result<Self> {
        let mut ds = Self::binary(y)?;
        ds.attach_covariates(x)?;
        Ok(ds)
    }

    fn attach_covariates(&mut self, x: DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.obs.len() {
            return Err(Error::DimensionMismatch(format!(
                "covariate matrix has {} rows for {} observations",
                x.nrows(),
                self.obs.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("covariate matrix has no columns".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariate entry".into()));
        }
        let rank = x.clone().svd(false, false).rank(1e-10 * x.nrows() as f64);
        if rank < x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "covariate matrix is rank deficient (rank {rank} < {} columns)",
                x.ncols()
            )));
        }
        let y = DVector::from_iterator(
            self.obs.len(),
            match &self.obs {
                Observations::Binary(v) => v.iter().map(|&b| b as f64).collect::<Vec<_>>(),
                Observations::Reals(v) => v.clone(),
                Observations::Counts(v) => v.iter().map(|&c| c as f64).collect::<Vec<_>>(),
            },
        );
        self.stats.xtx = Some(x.transpose() * &x);
        self.stats.xty = Some(x.transpose() * y);
        self.covariates = Some(x);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.obs.len()
    }

    pub fn observations(&self) -> &Observations {
        &self.obs
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.covariates.as_ref()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.as_ref().map_or(0, |x| x.ncols())
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    /// Response values as f64, regardless of payload type.
    pub fn responses_f64(&self) -> Vec<f64> {
        match &self.obs {
            Observations::Binary(v) => v.iter().map(|&b| b as f64).collect(),
            Observations::Counts(v) => v.iter().map(|&c| c as f64).collect(),
            Observations::Reals(v) => v.clone(),
        }
    }

    /// Load a dataset from CSV with a `y` response column and optional
    /// `x1..xP` covariate columns.
    pub fn from_csv(reader: impl Read, kind: ResponseKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let y_idx = headers
            .iter()
            .position(|h| h.trim() == "y")
            .ok_or_else(|| Error::InvalidArgument("csv is missing a `y` response column".into()))?;
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            let h = h.trim();
            if let Some(rest) = h.strip_prefix('x') {
                if let Ok(k) = rest.parse::<usize>() {
                    if k >= 1 {
                        x_cols.push((k, i));
                    }
                }
            }
        }
        x_cols.sort_unstable();
        for (pos, &(k, _)) in x_cols.iter().enumerate() {
            if k != pos + 1 {
                return Err(Error::InvalidArgument(format!(
                    "covariate columns must be named x1..xP without gaps; found x{k}"
                )));
            }
        }

        let mut y_raw: Vec<f64> = Vec::new();
        let mut x_raw: Vec<f64> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let parse = |idx: usize| -> Result<f64> {
                record
                    .get(idx)
                    .ok_or_else(|| Error::InvalidArgument("short csv record".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad numeric field: {e}")))
            };
            y_raw.push(parse(y_idx)?);
            for &(_, idx) in &x_cols {
                x_raw.push(parse(idx)?);
            }
        }
        if y_raw.is_empty() {
            return Err(Error::InvalidArgument("csv contains no data rows".into()));
        }

        let covariates = if x_cols.is_empty() {
            None
        } else {
            Some(DMatrix::from_row_slice(y_raw.len(), x_cols.len(), &x_raw))
        };

        let mut ds = match kind {
            ResponseKind::Binary => {
                let vals = y_raw
                    .iter()
                    .map(|&v| {
                        if v == 0.0 || v == 1.0 {
                            Ok(v as u8)
                        } else {
                            Err(Error::InvalidArgument(format!("binary response {v} is not 0/1")))
                        }
                    })
                    .collect::<Result<Vec<u8>>>()?;
                Dataset::binary(vals)?
            }
            ResponseKind::Count => {
                let vals = y_raw
                    .iter()
                    .map(|&v| {
                        if v >= 0.0 && v.fract() == 0.0 {
                            Ok(v as u64)
                        } else {
                            Err(Error::InvalidArgument(format!("count response {v} is not a non-negative integer")))
                        }
                    })
                    .collect::<Result<Vec<u64>>>()?;
                Dataset::counts(vals)?
            }
            ResponseKind::Real => Dataset::reals(y_raw)?,
        };
        if let Some(x) = covariates {
            ds.attach_covariates(x)?;
        }
        Ok(ds)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, kind: ResponseKind) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv(file, kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bernoulli_counts_caches_sum() {
        let d = Dataset::bernoulli_counts(20, 100).unwrap();
        assert_eq!(d.n(), 100);
        assert_relative_eq!(d.stats().sum, 20.0);
    }

    #[test]
    fn rejects_empty_and_invalid() {
        assert!(Dataset::binary(vec![]).is_err());
        assert!(Dataset::binary(vec![0, 2]).is_err());
        assert!(Dataset::bernoulli_counts(5, 3).is_err());
        assert!(Dataset::reals(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn real_stats_match_hand_computation() {
        let d = Dataset::reals(vec![1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(d.stats().sum, 6.0);
        assert_relative_eq!(d.stats().centered_sum_sq, 2.0);
        assert_relative_eq!(d.stats().sum_sq, 14.0);
    }

    #[test]
    fn count_stats_include_log_factorials() {
        let d = Dataset::counts(vec![0, 1, 3]).unwrap();
        assert_relative_eq!(d.stats().sum, 4.0);
        assert_relative_eq!(d.stats().sum_ln_factorial, (6.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_covariates_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(Dataset::regression(vec![1.0, 2.0, 3.0], x).is_err());
    }

    #[test]
    fn csv_round_trip_with_covariates() {
        let csv = "y,x1,x2\n1,0.5,-1.0\n0,0.25,2.0\n1,-0.75,0.5\n";
        let d = Dataset::from_csv(csv.as_bytes(), ResponseKind::Binary).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.n_covariates(), 2);
        assert!(d.stats().xtx.is_some());
    }

    #[test]
    fn csv_requires_response_column() {
        let csv = "z,x1\n1,0.5\n";
        assert!(Dataset::from_csv(csv.as_bytes(), ResponseKind::Real).is_err());
    }
}
