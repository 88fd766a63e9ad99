//! Smooth approximation of l(a0) from grid estimates.
//!
//! The smoother is a natural cubic spline with knots at the training
//! abscissae and as many basis coefficients as data points, fitted by least
//! squares. With q = J the fit interpolates the training values; that
//! deliberate overfit is harmless because predictions are only consumed
//! inside the measured range. Predictions on a fine K-point grid form a
//! lookup dictionary used to normalise posteriors by linear interpolation.
//! A derivative-only variant fits l'(a0) instead and integrates the fitted
//! curve with the midpoint rule, anchored at l(0) = 0.

use crate::conjugate::ConjugateConstants;
use crate::error::{Error, Result};
use crate::grid::GridResult;
use nalgebra::{DMatrix, DVector};
use std::io::{BufRead, BufReader, Read, Write};

/// Natural cubic spline fitted by least squares: knot locations, basis
/// coefficients and an intercept.
#[derive(Debug, Clone)]
pub struct SplineFit {
    knots: Vec<f64>,
    knot_values: Vec<f64>,
    intercept: f64,
    coefficients: Vec<f64>,
    /// Basis order (cubic).
    pub order: usize,
}

impl SplineFit {
    /// Least-squares fit of the natural cubic spline basis to (xs, ys).
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch("abscissae and values differ in length".into()));
        }
        if xs.len() < 4 {
            return Err(Error::InvalidArgument("need at least four points to fit the spline".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Numerical("non-finite training value".into()));
        }
        let n = xs.len();
        // Design matrix: intercept plus n−1 natural-spline basis functions.
        let mut design = DMatrix::zeros(n, n);
        for (i, &x) in xs.iter().enumerate() {
            design[(i, 0)] = 1.0;
            for (j, b) in natural_basis(xs, x).into_iter().enumerate() {
                design[(i, j + 1)] = b;
            }
        }
        let rhs = DVector::from_column_slice(ys);
        let svd = design.svd(true, true);
        let sol = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numerical(format!("spline least squares failed: {e}")))?;
        let fit = Self {
            knots: xs.to_vec(),
            knot_values: ys.to_vec(),
            intercept: sol[0],
            coefficients: sol.as_slice()[1..].to_vec(),
            order: 3,
        };
        let range = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = 1e-6 * range.max(1.0);
        let worst = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| (fit.predict(x) - y).abs())
            .fold(0.0, f64::max);
        if worst > tol {
            return Err(Error::Numerical(format!(
                "spline fit failed to reproduce its training data (max residual {worst:.3e})"
            )));
        }
        Ok(fit)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Evaluate the fitted spline; linear beyond the boundary knots.
    pub fn predict(&self, x: f64) -> f64 {
        let mut acc = self.intercept;
        for (b, c) in natural_basis(&self.knots, x).into_iter().zip(&self.coefficients) {
            acc += b * c;
        }
        acc
    }
}

/// Natural cubic spline basis at `x` for the given knots, after rescaling
/// the axis to [0, 1] for conditioning: the identity function and K−2
/// divided truncated cubics that are linear outside the boundary knots.
fn natural_basis(knots: &[f64], x: f64) -> Vec<f64> {
    let k = knots.len();
    let lo = knots[0];
    let span = knots[k - 1] - lo;
    let s = |v: f64| (v - lo) / span;
    let xs = s(x);
    let last = s(knots[k - 1]);
    let next_to_last = s(knots[k - 2]);
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let d = |knot: f64| (cube(xs - knot) - cube(xs - last)) / (last - knot);
    let d_last = d(next_to_last);
    let mut out = Vec::with_capacity(k - 1);
    out.push(xs);
    for &knot in &knots[..k - 2] {
        out.push(d(s(knot)) - d_last);
    }
    out
}

/// Where a dictionary's values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Direct,
    DerivativeMidpoint,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Direct => "direct",
            Provenance::DerivativeMidpoint => "derivative_midpoint",
        }
    }
}

/// K-point lookup table a0 → l̂(a0) on a uniform grid over [0, M].
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub a0_grid: Vec<f64>,
    pub l_values: Vec<f64>,
    pub provenance: Provenance,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.a0_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a0_grid.is_empty()
    }

    pub fn min_a0(&self) -> f64 {
        self.a0_grid[0]
    }

    pub fn max_a0(&self) -> f64 {
        *self.a0_grid.last().expect("dictionary is non-empty")
    }

    /// CSV with header `a0,l_hat` and 17-significant-digit values.
    pub fn to_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "a0,l_hat")?;
        for (a, l) in self.a0_grid.iter().zip(&self.l_values) {
            writeln!(w, "{a:.16e},{l:.16e}")?;
        }
        Ok(())
    }

    /// Read a dictionary written by [`Dictionary::to_csv`]; `#` lines are
    /// provenance comments and are skipped.
    pub fn from_csv(r: impl Read, provenance: Provenance) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut a0_grid = Vec::new();
        let mut l_values = Vec::new();
        let mut saw_header = false;
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "a0,l_hat" {
                    return Err(Error::InvalidArgument(format!("unexpected dictionary header: {line}")));
                }
                saw_header = true;
                continue;
            }
            let mut parts = line.split(',');
            let a: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidArgument("bad a0 field in dictionary".into()))?;
            let l: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidArgument("bad l_hat field in dictionary".into()))?;
            a0_grid.push(a);
            l_values.push(l);
        }
        if a0_grid.len() < 2 {
            return Err(Error::InvalidArgument("dictionary needs at least two rows".into()));
        }
        if a0_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("dictionary grid must be strictly increasing".into()));
        }
        Ok(Self { a0_grid, l_values, provenance })
    }
}

/// Fit the l(a0) smoother to a grid's (Z, F) pairs.
pub fn fit_l_curve(grid: &GridResult) -> Result<SplineFit> {
    SplineFit::fit(&grid.zs(), &grid.fs())
}

/// Predict the fitted curve on K evenly spaced points over [0, upper].
/// When 0 was a training knot its dictionary value is exactly the training
/// value (0 for grids built with the free anchor).
pub fn predict_dictionary(fit: &SplineFit, k: usize, upper: f64) -> Result<Dictionary> {
    if k < 2 {
        return Err(Error::InvalidArgument("dictionary needs at least two points".into()));
    }
    if !(upper > 0.0) {
        return Err(Error::InvalidArgument("dictionary range must be positive".into()));
    }
    let h = upper / (k - 1) as f64;
    let a0_grid: Vec<f64> = (0..k).map(|i| if i + 1 == k { upper } else { i as f64 * h }).collect();
    let mut l_values: Vec<f64> = a0_grid.iter().map(|&a| fit.predict(a)).collect();
    if fit.knots[0] == 0.0 {
        l_values[0] = fit.knot_values[0];
    }
    Ok(Dictionary { a0_grid, l_values, provenance: Provenance::Direct })
}

/// Linear interpolation in the dictionary; no extrapolation.
pub fn lookup_l(dict: &Dictionary, a0: f64) -> Result<f64> {
    let (min, max) = (dict.min_a0(), dict.max_a0());
    if !(min..=max).contains(&a0) {
        return Err(Error::DictionaryRange { requested: a0, min, max });
    }
    let idx = dict.a0_grid.partition_point(|&g| g <= a0);
    if idx == 0 {
        return Ok(dict.l_values[0]);
    }
    if idx >= dict.len() {
        return Ok(*dict.l_values.last().expect("non-empty"));
    }
    let (x0, x1) = (dict.a0_grid[idx - 1], dict.a0_grid[idx]);
    let t = (a0 - x0) / (x1 - x0);
    Ok(dict.l_values[idx - 1] * (1.0 - t) + dict.l_values[idx] * t)
}

/// Derivative-only variant: fit the smoother to (Z, l̂'(Z)), predict it at
/// the midpoints of a K-point grid and integrate with the midpoint rule,
/// anchored at l(0) = 0. The fitted derivative extends linearly below the
/// smallest knot, which covers [0, m).
pub fn fit_l_from_derivative(grid: &GridResult, k: usize) -> Result<Dictionary> {
    if k < 2 {
        return Err(Error::InvalidArgument("dictionary needs at least two points".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in &grid.points {
        match p.l_prime {
            Some(lp) => {
                xs.push(p.a0);
                ys.push(lp);
            }
            // The free anchor may legitimately lack a derivative.
            None if p.a0 == 0.0 => {}
            None => {
                return Err(Error::InvalidArgument(format!(
                    "grid point a0 = {} is missing a derivative estimate",
                    p.a0
                )))
            }
        }
    }
    let fit = SplineFit::fit(&xs, &ys)?;
    let upper = grid.upper();
    let h = upper / (k - 1) as f64;
    let a0_grid: Vec<f64> = (0..k).map(|i| if i + 1 == k { upper } else { i as f64 * h }).collect();
    let mut l_values = Vec::with_capacity(k);
    l_values.push(0.0);
    let mut acc = 0.0;
    for i in 1..k {
        let mid = 0.5 * (a0_grid[i - 1] + a0_grid[i]);
        acc += (a0_grid[i] - a0_grid[i - 1]) * fit.predict(mid);
        l_values.push(acc);
    }
    Ok(Dictionary { a0_grid, l_values, provenance: Provenance::DerivativeMidpoint })
}

/// MAD, RMSE and MRAE of a dictionary against an exact curve, restricted to
/// a range of a0 values.
#[derive(Debug, Clone, Copy)]
pub struct CurveMetrics {
    pub mad: f64,
    pub rmse: f64,
    pub mrae: f64,
}

/// Metrics against the closed-form constants of a conjugate family.
pub fn curve_metrics(dict: &Dictionary, truth: &ConjugateConstants, range: (f64, f64)) -> CurveMetrics {
    curve_metrics_fn(dict, |a| truth.log_c(a), range)
}

/// Metrics against an arbitrary exact curve.
pub fn curve_metrics_fn(
    dict: &Dictionary,
    truth: impl Fn(f64) -> f64,
    range: (f64, f64),
) -> CurveMetrics {
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut rel_sum = 0.0;
    let mut n = 0usize;
    let mut n_rel = 0usize;
    for (a, l_hat) in dict.a0_grid.iter().zip(&dict.l_values) {
        if *a < range.0 || *a > range.1 {
            continue;
        }
        let l = truth(*a);
        let err = (l_hat - l).abs();
        abs_sum += err;
        sq_sum += err * err;
        n += 1;
        if l.abs() >= 1e-8 {
            rel_sum += err / l.abs();
            n_rel += 1;
        }
    }
    let nf = n.max(1) as f64;
    CurveMetrics {
        mad: abs_sum / nf,
        rmse: (sq_sum / nf).sqrt(),
        mrae: if n_rel > 0 { rel_sum / n_rel as f64 } else { 0.0 },
    }
}
