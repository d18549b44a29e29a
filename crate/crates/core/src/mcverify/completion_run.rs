//! Low-rank completion experiments over a grid of observation rates.

use std::collections::BTreeMap;

use crate::completion::{decompose, observe, project_leading, rescale, CompletionPredictors};
use crate::error::{Error, Result};
use crate::matcore::{default_rank_tol, singular_values, spectral_norm, svd};
use crate::mcverify::{cell_record, finish, run_cell, violation, weyl_holds, Check, TrialConfig, TrialOut, TrialReport};

const NAMES: [&str; 6] = ["errSpectral", "errFrob", "errColumn", "leadingSvRel", "normH", "normE"];

/// Errors of `Ã_j = P_{Ũ_j} B̃` against the truth: spectral, Frobenius,
/// one tracked column, and the relative error of `‖B̃‖`.
pub fn run_completion(cfg: &TrialConfig) -> Result<TrialReport> {
    cfg.validate()?;
    let a = cfg.matrix.build()?;
    if a.rows() < a.cols() {
        return Err(Error::invalid(format!(
            "completion experiments assume N >= n, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if cfg.column >= a.cols() {
        return Err(Error::invalid(format!("column {} out of range 0..{}", cfg.column, a.cols())));
    }
    let f = svd(&a, default_rank_tol(a.rows(), a.cols()))?;
    let rank = f.numerical_rank();
    if rank == 0 {
        return Err(Error::ZeroMatrix("completion experiment"));
    }
    let j = cfg.j.unwrap_or(rank);
    if j > a.cols() {
        return Err(Error::invalid(format!("truncation rank {j} exceeds {}", a.cols())));
    }
    let sigma: Vec<f64> = f.sigma().to_vec();
    let s1 = sigma[0];
    let max_a = a.max_abs();
    // ‖A − Ã_j‖_F <= √rank(A − Ã_j) ‖A − Ã_j‖, and the rank is at most r + j
    let rank_factor = ((rank + j) as f64).sqrt();

    let mut invariants = BTreeMap::new();
    let mut cells = Vec::with_capacity(cfg.grid.len());
    for (cell, &p) in cfg.grid.iter().enumerate() {
        let samples = run_cell(cfg, cell, &NAMES, &mut invariants, |trial, seed| {
            let fail = |w: String| violation(cell, trial, seed, w);
            let obs = observe(&a, p, cfg.noise, cfg.sigma, seed)?;
            let dec = decompose(&obs, &a)?;
            let z_max = obs.noise_values().map_or(0.0, |z| z.max_abs());
            let allowed = 16.0 * f64::EPSILON * (max_a + z_max) / p;
            let res = dec.residual();
            if res > allowed {
                return Err(fail(format!("H = E + F residual {res:e} above rounding level {allowed:e}")));
            }
            let e_max = dec.e.max_abs();
            if e_max > max_a / p * (1.0 + 4.0 * f64::EPSILON) {
                return Err(fail(format!("|E_ij| = {e_max:e} exceeds ‖A‖_max/p = {:e}", max_a / p)));
            }
            let b = rescale(&obs);
            let (est, sigma_b) = project_leading(&b, j)?;
            let diff = a.sub(&est)?;
            let err = spectral_norm(&diff)?;
            let frob = diff.frobenius();
            if frob > rank_factor * err * (1.0 + 1e-9) + 1e-300 {
                return Err(fail(format!("‖A − Ã‖_F = {frob:e} > √{} ‖A − Ã‖ = {:e}", rank + j, rank_factor * err)));
            }
            let norm_h = spectral_norm(&dec.h)?;
            let weyl = weyl_holds(&sigma, &sigma_b, norm_h).map_err(&fail)?;
            let norm_e = singular_values(&dec.e)?[0];
            Ok(TrialOut {
                values: vec![
                    err,
                    frob,
                    diff.column_norm(cfg.column),
                    (sigma_b[0] / s1 - 1.0).abs(),
                    norm_h,
                    norm_e,
                ],
                checks: vec![("decomposition", 1), ("entryBound", 1), ("rankNorm", 1), ("weyl", weyl)],
            })
        })?;
        let pred = CompletionPredictors::compute(&a, p, cfg.sigma, cfg.eps)?;
        let report = pred.to_report();
        let column_key = format!("columnBound_{}", cfg.column + 1);
        let truncated_key = format!("truncatedWithTail_{}", j.min(rank));
        let mut pairs = vec![
            ("errColumn", column_key.as_str()),
            ("errSpectral", truncated_key.as_str()),
            ("normH", "normLevel"),
            ("leadingSvRel", "leadingSvRel"),
        ];
        if j == rank {
            pairs.push(("errSpectral", "fullRecoveryBound"));
        }
        let mut rec = cell_record(cfg, cell, p, &samples, report.predictors, &pairs);
        rec.extras.insert("bestTruncation".into(), pred.best_j as f64);
        rec.extras.insert("meanSquareEntry".into(), pred.regime.mean_square_entry);
        rec.extras.insert("maxAbs".into(), pred.regime.max_abs);
        rec.extras.insert("aspectRatio".into(), pred.regime.aspect_ratio);
        rec.extras.insert("sigma".into(), cfg.sigma);
        rec.extras.insert("j".into(), j as f64);
        rec.flags.extend(report.regime_flags);
        cells.push(rec);
    }

    let mut checks = Vec::new();
    if let Some(tol) = cfg.acceptance.max_relative_error {
        let worst = cells
            .iter()
            .map(|c| c.metrics["errSpectral"].max)
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "maxRelativeError",
            worst <= tol * s1,
            format!("max ‖A − Ã‖ = {worst:e}, allowed {tol:e}·‖A‖_2 = {:e}", tol * s1),
        ));
    }
    let notes = vec![format!(
        "rank {rank}, j = {j}; regime parameters are descriptive and not judged"
    )];
    Ok(finish(cfg, cells, checks, invariants, notes))
}
