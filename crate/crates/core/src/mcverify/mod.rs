//! Monte-Carlo verification harness.
//!
//! A [`TrialConfig`] names an experiment, a test matrix and a parameter grid.
//! Each grid cell runs `trials` independent trials, each on its own stream
//! seeded by `derive_seed(master, cell, trial)`. Trials inside a cell run on
//! the rayon pool; results are folded in trial order, so a report depends
//! only on the config, never on the thread count.
//!
//! Deterministic per-trial inequalities (Weyl, the entrywise error cap,
//! `H = E + F`, `sin∠ ∈ [0, 1]`, …) are checked in every trial; a violation
//! aborts the run with [`Error::InvariantViolation`]. Statistical rules are
//! collected as [`Check`]s on the report.

pub mod config;
pub mod report;
pub mod stats;

mod completion_run;
mod concentration_run;
mod sparsify_run;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use completion_run::run_completion;
pub use concentration_run::run_concentration;
pub use config::{AcceptanceRules, ExperimentKind, MatrixSpec, TrialConfig, VectorChoice};
pub use report::{CellRecord, Check, TrialReport};
pub use sparsify_run::{run_sparsify_subspace, run_sparsify_sv};
pub use stats::{fit_loglog_slope, MetricSummary};

use crate::bounds::{ratio, Predictor};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Runs whichever experiment the config names.
pub fn run(cfg: &TrialConfig) -> Result<TrialReport> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::SparsifySv => run_sparsify_sv(cfg),
        ExperimentKind::SparsifySubspace => run_sparsify_subspace(cfg),
        ExperimentKind::CompletionFull | ExperimentKind::CompletionColumn => run_completion(cfg),
        ExperimentKind::Concentration => run_concentration(cfg),
    }
}

/// Sizes the global rayon pool; call once, before the first run.
pub fn configure_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// What one trial hands back: metric values (in the runner's metric order)
/// and how many deterministic inequalities it verified.
pub(crate) struct TrialOut {
    pub values: Vec<f64>,
    pub checks: Vec<(&'static str, u64)>,
}

/// Per-metric samples of one cell, in trial order.
pub(crate) struct CellSamples {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
}

impl CellSamples {
    pub fn get(&self, name: &str) -> &[f64] {
        let k = self.names.iter().position(|n| n == name).expect("known metric");
        &self.samples[k]
    }
}

pub(crate) fn violation(cell: usize, trial: usize, seed: u64, what: String) -> Error {
    Error::InvariantViolation(format!("cell {cell}, trial {trial} (seed {seed:#018x}): {what}"))
}

/// Runs all trials of one cell and folds them in trial order. The first
/// failing trial (by index) decides the error.
pub(crate) fn run_cell<F>(
    cfg: &TrialConfig,
    cell: usize,
    names: &[&str],
    invariants: &mut BTreeMap<String, u64>,
    trial: F,
) -> Result<CellSamples>
where
    F: Fn(usize, u64) -> Result<TrialOut> + Sync,
{
    let outs: Vec<Result<TrialOut>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(t, derive_seed(cfg.master_seed, cell as u64, t as u64)))
        .collect();
    let mut samples = vec![Vec::with_capacity(cfg.trials); names.len()];
    for out in outs {
        let out = out?;
        debug_assert_eq!(out.values.len(), names.len());
        for (s, v) in samples.iter_mut().zip(out.values) {
            s.push(v);
        }
        for (name, n) in out.checks {
            *invariants.entry(name.to_string()).or_default() += n;
        }
    }
    Ok(CellSamples {
        names: names.iter().map(|s| s.to_string()).collect(),
        samples,
    })
}

/// Turns a cell's samples into a record with summaries and, for each
/// `(metric, predictor)` pair, the `(1 − ε)` quantile over the predictor.
pub(crate) fn cell_record(
    cfg: &TrialConfig,
    index: usize,
    param: f64,
    samples: &CellSamples,
    predictors: BTreeMap<String, Predictor>,
    ratio_pairs: &[(&str, &str)],
) -> CellRecord {
    let metrics: BTreeMap<String, MetricSummary> = samples
        .names
        .iter()
        .zip(&samples.samples)
        .map(|(n, xs)| (n.clone(), MetricSummary::from_sample(xs, &cfg.quantiles)))
        .collect();
    let mut ratios = BTreeMap::new();
    for (metric, pred) in ratio_pairs {
        if let Some(p) = predictors.get(*pred) {
            let mut xs = samples.get(metric).to_vec();
            xs.sort_by(f64::total_cmp);
            let q = stats::quantile(&xs, 1.0 - cfg.eps);
            ratios.insert(format!("{metric}/{pred}"), ratio(q, p.value));
        }
    }
    CellRecord {
        index,
        param_name: cfg.kind.param_name().to_string(),
        param,
        metrics,
        predictors,
        ratios,
        flags: BTreeMap::new(),
        extras: BTreeMap::new(),
    }
}

/// Fits slopes, applies the generic acceptance rules (slope band,
/// monotonicity) and assembles the report.
pub(crate) fn finish(
    cfg: &TrialConfig,
    cells: Vec<CellRecord>,
    mut checks: Vec<Check>,
    invariant_checks: BTreeMap<String, u64>,
    mut notes: Vec<String>,
) -> TrialReport {
    let mut slopes = BTreeMap::new();
    let mut distinct: Vec<f64> = cells.iter().map(|c| c.param).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() >= 3 {
        if let Some(first) = cells.first() {
            for name in first.metrics.keys() {
                let pts: Vec<(f64, f64)> = cells
                    .iter()
                    .filter_map(|c| c.median(name).map(|v| (c.param, v)))
                    .collect();
                if let Ok(s) = fit_loglog_slope(&pts) {
                    slopes.insert(name.clone(), s);
                }
            }
        }
    }

    let metric = cfg.slope_metric();
    if let Some([lo, hi]) = cfg.acceptance.slope_band {
        let check = match slopes.get(&metric) {
            Some(&s) => Check::new(
                "slopeBand",
                s >= lo && s <= hi,
                format!("slope of median {metric} vs {} = {s:.4}, band [{lo}, {hi}]", cfg.kind.param_name()),
            ),
            None => Check::new(
                "slopeBand",
                false,
                format!("no slope for {metric}: need >= 3 distinct grid values and positive medians"),
            ),
        };
        checks.push(check);
    }
    if cfg.acceptance.require_monotone {
        let mut by_param: Vec<(f64, f64)> = cells
            .iter()
            .filter_map(|c| c.median(&metric).map(|v| (c.param, v)))
            .collect();
        by_param.sort_by(|a, b| a.0.total_cmp(&b.0));
        let decreasing = by_param.len() == cells.len() && by_param.windows(2).all(|w| w[1].1 < w[0].1);
        let listing: Vec<String> = by_param.iter().map(|(p, v)| format!("{p}: {v:.4e}")).collect();
        checks.push(Check::new(
            "monotoneDecrease",
            decreasing,
            format!("median {metric} by {}: {}", cfg.kind.param_name(), listing.join(", ")),
        ));
    }
    if cells.iter().any(|c| c.flags.get("clamped") == Some(&true)) {
        notes.push("some cells capped keep-probabilities at 1 (clamp policy)".into());
    }

    TrialReport {
        schema_version: config::SCHEMA_VERSION,
        kind: cfg.kind,
        tool_version: crate::TOOL_VERSION.to_string(),
        config_digest: cfg.digest(),
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        passed: checks.iter().all(|c| c.passed),
        cells,
        slopes,
        checks,
        invariant_checks,
        notes,
    }
}

/// `|σ̃_i − σ_i| <= ‖E‖` for every index, up to rounding in the SVDs.
pub(crate) fn weyl_holds(sigma: &[f64], sigma_tilde: &[f64], norm_e: f64) -> std::result::Result<u64, String> {
    let tol = 1e-10 * (sigma.first().copied().unwrap_or(0.0) + norm_e);
    for (i, (s, st)) in sigma.iter().zip(sigma_tilde).enumerate() {
        if (st - s).abs() > norm_e + tol {
            return Err(format!(
                "Weyl: |σ̃_{} − σ_{}| = {:e} > ‖E‖ = {norm_e:e}",
                i + 1,
                i + 1,
                (st - s).abs()
            ));
        }
    }
    Ok(sigma.len().min(sigma_tilde.len()) as u64)
}
