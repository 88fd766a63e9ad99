//! Subcommand implementations: each one resolves a config, runs the
//! corresponding pipeline stage and writes provenance-stamped CSV/JSON
//! artifacts into the output directory.

use crate::config::{Backend, GridStrategy, NormalisationMode, Resolved};
use crate::provenance::Provenance;
use powerprior::bridge::BridgeConfig;
use powerprior::conjugate::ConjugateConstants;
use powerprior::curvefit::{
    curve_metrics_fn, fit_l_curve, fit_l_from_derivative, lookup_l, predict_dictionary,
    CurveMetrics, Dictionary, Provenance as DictProvenance,
};
use powerprior::grid::{
    build_adaptive_grid, build_uniform_grid, is_monotone_family, BridgeEvaluator,
    ClosedFormEvaluator, Evaluator, GridMode, GridResult,
};
use powerprior::posterior::{
    exact_marginal_a0, sample_joint, sensitivity_analysis, summarise, JointDraws, Normalisation,
    ParamSummary,
};
use powerprior::{Error, Family, Result};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Pretty-printed resolved config; hashed for provenance and written next to
/// the artifacts so a run can be reproduced from its output directory alone.
pub fn config_json(resolved: &Resolved) -> String {
    serde_json::to_string_pretty(&resolved.config).expect("config serialises")
}

pub fn provenance_for(resolved: &Resolved) -> Provenance {
    Provenance::new(&config_json(resolved), resolved.config.seed)
}

fn ensure_outdir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn write_resolved_config(resolved: &Resolved, out: &Path) -> Result<()> {
    std::fs::write(out.join("resolved-config.json"), config_json(resolved) + "\n")?;
    Ok(())
}

/// Build the evaluator selected by the config.
pub fn make_evaluator<'a>(resolved: &'a Resolved) -> Result<Box<dyn Evaluator + 'a>> {
    match resolved.config.grid.backend {
        Backend::ClosedForm => Ok(Box::new(ClosedFormEvaluator::new(
            &resolved.model,
            &resolved.historical,
        )?)),
        Backend::Bridge => Ok(Box::new(BridgeEvaluator {
            model: &resolved.model,
            historical: &resolved.historical,
            chain_cfg: resolved.chains.clone(),
            bridge_cfg: BridgeConfig::default(),
            seed: resolved.config.seed,
        })),
    }
}

/// Build the estimation grid per the configured strategy.
pub fn build_grid(resolved: &Resolved) -> Result<GridResult> {
    let budget = resolved.config.grid.budget();
    let eval = make_evaluator(resolved)?;
    match resolved.config.grid.strategy {
        GridStrategy::Adaptive => {
            build_adaptive_grid(eval.as_ref(), &budget, is_monotone_family(&resolved.model))
        }
        GridStrategy::Uniform => build_uniform_grid(eval.as_ref(), &budget),
    }
}

/// Fit the direct dictionary from a grid.
pub fn build_dictionary(resolved: &Resolved, grid: &GridResult) -> Result<Dictionary> {
    let fit = fit_l_curve(grid)?;
    predict_dictionary(&fit, resolved.config.k, resolved.config.grid.upper)
}

fn closed_form_constants(resolved: &Resolved) -> Option<ConjugateConstants> {
    ConjugateConstants::new(&resolved.model, &resolved.historical).ok()
}

#[derive(Serialize)]
struct GridSidecar {
    mode: String,
    backend: String,
    j: usize,
    m: f64,
    upper: f64,
    v1: f64,
    v2: f64,
    n_points: usize,
}

pub fn write_grid_files(
    prov: &Provenance,
    resolved: &Resolved,
    grid: &GridResult,
    out: &Path,
) -> Result<()> {
    prov.write_csv(&out.join("grid.csv"), |buf| grid.to_csv(buf))?;
    let g = &resolved.config.grid;
    prov.write_json(
        &out.join("grid.json"),
        &GridSidecar {
            mode: match grid.mode {
                GridMode::Bisection => "bisection".into(),
                GridMode::Uniform => "uniform".into(),
            },
            backend: grid.backend.to_string(),
            j: g.j,
            m: g.m,
            upper: g.upper,
            v1: g.v1,
            v2: g.v2,
            n_points: grid.points.len(),
        },
    )
}

#[derive(Serialize)]
struct MetricsOut {
    mad: f64,
    rmse: f64,
    mrae: f64,
}

impl From<CurveMetrics> for MetricsOut {
    fn from(m: CurveMetrics) -> Self {
        Self { mad: m.mad, rmse: m.rmse, mrae: m.mrae }
    }
}

#[derive(Serialize)]
struct DictionarySidecar {
    j: usize,
    k: usize,
    m: f64,
    upper: f64,
    backend: String,
    seed: u64,
    provenance_tag: String,
    metrics_vs_closed_form: Option<MetricsOut>,
    derivative_variant: Option<MetricsOut>,
}

/// `constants`: closed form (when available) and bridge estimates at the
/// configured a0 list.
pub fn cmd_constants(resolved: &Resolved, out: &Path) -> Result<()> {
    if resolved.config.a0_list.is_empty() {
        return Err(Error::InvalidArgument(
            "constants needs a non-empty a0_list in the config".into(),
        ));
    }
    ensure_outdir(out)?;
    write_resolved_config(resolved, out)?;
    let prov = provenance_for(resolved);
    let exact = closed_form_constants(resolved);
    let bridge = BridgeEvaluator {
        model: &resolved.model,
        historical: &resolved.historical,
        chain_cfg: resolved.chains.clone(),
        bridge_cfg: BridgeConfig::default(),
        seed: resolved.config.seed,
    };
    let rows: Vec<Result<(f64, Option<f64>, f64, f64)>> = resolved
        .config
        .a0_list
        .iter()
        .map(|&a0| {
            let e = bridge.eval(a0)?;
            Ok((a0, exact.as_ref().map(|c| c.log_c(a0)), e.l, e.l_se))
        })
        .collect();
    prov.write_csv(&out.join("constants.csv"), |buf| {
        writeln!(buf, "a0,l_exact,l_bridge,se")?;
        for row in rows {
            let (a0, ex, lb, se) = row?;
            let ex = ex.map_or(String::new(), |v| format!("{v:.16e}"));
            writeln!(buf, "{a0:.16e},{ex},{lb:.16e},{se:.16e}")?;
        }
        Ok(())
    })
}

/// `grid`: build and persist the estimation grid.
pub fn cmd_grid(resolved: &Resolved, out: &Path) -> Result<()> {
    ensure_outdir(out)?;
    write_resolved_config(resolved, out)?;
    let prov = provenance_for(resolved);
    let grid = build_grid(resolved)?;
    write_grid_files(&prov, resolved, &grid, out)
}

/// `fit`: grid, spline fit, prediction dictionary and error metrics.
pub fn cmd_fit(resolved: &Resolved, out: &Path) -> Result<()> {
    ensure_outdir(out)?;
    write_resolved_config(resolved, out)?;
    let prov = provenance_for(resolved);
    let grid = build_grid(resolved)?;
    write_grid_files(&prov, resolved, &grid, out)?;
    let dict = build_dictionary(resolved, &grid)?;
    prov.write_csv(&out.join("dictionary.csv"), |buf| dict.to_csv(buf))?;

    let exact = closed_form_constants(resolved);
    // Metrics are taken over the measured range [m, M]; the stretch below m
    // carries no evaluations and is reported only through the dictionary.
    let range = (resolved.config.grid.m, resolved.config.grid.upper);
    let metrics = exact.as_ref().map(|cc| curve_metrics_fn(&dict, |a| cc.log_c(a), range).into());
    let derivative = if resolved.config.derivative_comparison {
        let ddict = fit_l_from_derivative(&grid, resolved.config.k)?;
        prov.write_csv(&out.join("dictionary-derivative.csv"), |buf| ddict.to_csv(buf))?;
        exact.as_ref().map(|cc| curve_metrics_fn(&ddict, |a| cc.log_c(a), range).into())
    } else {
        None
    };
    prov.write_json(
        &out.join("dictionary.json"),
        &DictionarySidecar {
            j: resolved.config.grid.j,
            k: resolved.config.k,
            m: resolved.config.grid.m,
            upper: resolved.config.grid.upper,
            backend: grid.backend.to_string(),
            seed: resolved.config.seed,
            provenance_tag: dict.provenance.as_str().to_string(),
            metrics_vs_closed_form: metrics,
            derivative_variant: derivative,
        },
    )
}

#[derive(Serialize)]
pub struct SummaryOut {
    pub normalisation: String,
    pub parameters: Vec<ParamRow>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub mcse: Vec<f64>,
    pub a0_acceptance: f64,
}

#[derive(Serialize)]
pub struct ParamRow {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl From<&ParamSummary> for ParamRow {
    fn from(s: &ParamSummary) -> Self {
        Self { name: s.name.clone(), mean: s.mean, lower: s.lower, upper: s.upper }
    }
}

pub fn summary_out(draws: &JointDraws, label: &str) -> SummaryOut {
    SummaryOut {
        normalisation: label.to_string(),
        parameters: summarise(draws).iter().map(ParamRow::from).collect(),
        rhat: draws.diagnostics.rhat.clone(),
        ess: draws.diagnostics.ess.clone(),
        mcse: draws.diagnostics.mcse.clone(),
        a0_acceptance: draws.a0_acceptance,
    }
}

fn write_draws_csv(
    prov: &Provenance,
    draws: &JointDraws,
    path: &Path,
) -> Result<()> {
    prov.write_csv(path, |buf| {
        let names = draws.param_names.join(",");
        writeln!(buf, "{names},a0,chain,iter")?;
        for (chain, (theta, a0s)) in draws.theta.iter().zip(&draws.a0).enumerate() {
            for i in 0..theta.nrows() {
                for j in 0..theta.ncols() {
                    write!(buf, "{:.16e},", theta[(i, j)])?;
                }
                writeln!(buf, "{:.16e},{chain},{i}", a0s[i])?;
            }
        }
        Ok(())
    })
}

/// Obtain the dictionary for approximate normalisation: load it from the
/// configured path, or run the grid + fit pipeline (persisting artifacts).
fn dictionary_for_sampling(
    resolved: &Resolved,
    prov: &Provenance,
    out: &Path,
) -> Result<Dictionary> {
    if let Some(path) = &resolved.config.dictionary_path {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot open dictionary {}: {e}", path.display())))?;
        return Dictionary::from_csv(file, DictProvenance::Direct);
    }
    let grid = build_grid(resolved)?;
    write_grid_files(prov, resolved, &grid, out)?;
    let dict = build_dictionary(resolved, &grid)?;
    prov.write_csv(&out.join("dictionary.csv"), |buf| dict.to_csv(buf))?;
    Ok(dict)
}

/// `sample`: draw from the joint posterior of (θ, a0) under the configured
/// normalisation and persist draws plus summaries.
pub fn cmd_sample(resolved: &Resolved, out: &Path) -> Result<()> {
    ensure_outdir(out)?;
    write_resolved_config(resolved, out)?;
    let prov = provenance_for(resolved);
    let current = resolved
        .current
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sample needs a current dataset".into()))?;

    let (draws, label) = match resolved.config.normalisation {
        NormalisationMode::None => (
            sample_joint(
                &resolved.model,
                &resolved.historical,
                current,
                &resolved.prior,
                Normalisation::None,
                &resolved.chains,
            )?,
            "none",
        ),
        NormalisationMode::Exact => {
            let cc = ConjugateConstants::new(&resolved.model, &resolved.historical)?;
            (
                sample_joint(
                    &resolved.model,
                    &resolved.historical,
                    current,
                    &resolved.prior,
                    Normalisation::Exact(&cc),
                    &resolved.chains,
                )?,
                "exact",
            )
        }
        NormalisationMode::Dictionary => {
            let dict = dictionary_for_sampling(resolved, &prov, out)?;
            (
                sample_joint(
                    &resolved.model,
                    &resolved.historical,
                    current,
                    &resolved.prior,
                    Normalisation::Dictionary(&dict),
                    &resolved.chains,
                )?,
                "approximate",
            )
        }
    };
    write_draws_csv(&prov, &draws, &out.join("draws.csv"))?;
    prov.write_json(&out.join("summary.json"), &summary_out(&draws, label))
}

/// `sensitivity`: fixed-a0 prior/posterior summaries over the a0 list.
pub fn cmd_sensitivity(resolved: &Resolved, out: &Path) -> Result<()> {
    if resolved.config.a0_list.is_empty() {
        return Err(Error::InvalidArgument(
            "sensitivity needs a non-empty a0_list in the config".into(),
        ));
    }
    ensure_outdir(out)?;
    write_resolved_config(resolved, out)?;
    let prov = provenance_for(resolved);
    let current = resolved
        .current
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sensitivity needs a current dataset".into()))?;
    let result = sensitivity_analysis(
        &resolved.model,
        &resolved.historical,
        current,
        &resolved.config.a0_list,
        &resolved.chains,
    )?;
    prov.write_csv(&out.join("sensitivity.csv"), |buf| {
        writeln!(buf, "a0,stage,parameter,mean,lower,upper")?;
        for row in &result.rows {
            for (stage, summaries) in
                [("prior", &row.prior_stage), ("posterior", &row.posterior_stage)]
            {
                for s in summaries {
                    writeln!(
                        buf,
                        "{:.16e},{stage},{},{:.16e},{:.16e},{:.16e}",
                        row.a0, s.name, s.mean, s.lower, s.upper
                    )?;
                }
            }
        }
        Ok(())
    })
}

/// Sample under one normalisation and persist draws + summary with a
/// mode-specific file suffix; used by the scenario pipelines.
pub fn sample_and_write(
    resolved: &Resolved,
    normalisation: Normalisation,
    label: &str,
    prov: &Provenance,
    out: &Path,
) -> Result<JointDraws> {
    let current = resolved
        .current
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("scenario needs a current dataset".into()))?;
    let draws = sample_joint(
        &resolved.model,
        &resolved.historical,
        current,
        &resolved.prior,
        normalisation,
        &resolved.chains,
    )?;
    write_draws_csv(prov, &draws, &out.join(format!("draws-{label}.csv")))?;
    prov.write_json(&out.join(format!("summary-{label}.json")), &summary_out(&draws, label))?;
    Ok(draws)
}

/// Exact quadrature marginal of a0 (conjugate families), persisted as CSV.
pub fn write_exact_marginal(
    resolved: &Resolved,
    k_quad: usize,
    prov: &Provenance,
    out: &Path,
) -> Result<powerprior::quad::DensityTable> {
    let current = resolved
        .current
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("marginal needs a current dataset".into()))?;
    let table = exact_marginal_a0(
        &resolved.model,
        &resolved.historical,
        current,
        &resolved.prior,
        k_quad,
    )?;
    prov.write_csv(&out.join("a0-marginal-exact.csv"), |buf| {
        writeln!(buf, "a0,log_density,cdf")?;
        for i in 0..table.grid.len() {
            writeln!(
                buf,
                "{:.16e},{:.16e},{:.16e}",
                table.grid[i], table.log_density[i], table.cdf[i]
            )?;
        }
        Ok(())
    })?;
    Ok(table)
}

/// Dictionary lookup sanity proxy used in reports: largest absolute gap
/// between the dictionary and the closed form on the dictionary's own grid.
pub fn dictionary_metrics(
    dict: &Dictionary,
    constants: &ConjugateConstants,
    range: (f64, f64),
) -> CurveMetrics {
    curve_metrics_fn(dict, |a| constants.log_c(a), range)
}

/// Convenience used by scenario reports: the fitted value at one a0.
pub fn dictionary_value(dict: &Dictionary, a0: f64) -> Result<f64> {
    lookup_l(dict, a0)
}

/// Guard: the bridge backend is required for families without closed forms.
pub fn check_backend_supported(resolved: &Resolved) -> Result<()> {
    if resolved.config.grid.backend == Backend::ClosedForm
        && resolved.model.family() == Family::LogisticRegression
    {
        return Err(Error::Unsupported(
            "logistic regression has no closed-form constants; use the bridge backend".into(),
        ));
    }
    Ok(())
}
