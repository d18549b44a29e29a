//! Singular-value and singular-subspace experiments on sparsified matrices.

use std::collections::BTreeMap;

use crate::bounds::SparsifyPredictors;
use crate::error::{Error, Result};
use crate::matcore::{default_rank_tol, sin_angle, singular_values, spectral_norm, svd};
use crate::mcverify::{cell_record, finish, run_cell, violation, weyl_holds, Check, TrialConfig, TrialOut, TrialReport};
use crate::sparsify::{feasible_m_max, BernoulliSampler, Method, ReplacementSampler};
use crate::{Matrix, SparsifyOutcome};

enum Sampler {
    Replacement(ReplacementSampler<f64>, usize),
    Bernoulli(BernoulliSampler<f64>),
}

impl Sampler {
    fn new(cfg: &TrialConfig, a: &Matrix, m: f64) -> Result<Self> {
        Ok(match cfg.method {
            Method::Replacement => Sampler::Replacement(ReplacementSampler::new(a)?, m as usize),
            Method::Bernoulli => Sampler::Bernoulli(BernoulliSampler::new(a, m, cfg.clamp)?),
        })
    }

    fn draw(&self, cell: usize, trial: usize, seed: u64) -> Result<SparsifyOutcome> {
        let out = match self {
            Sampler::Replacement(s, m) => s.sample(*m, seed),
            Sampler::Bernoulli(s) => s.sample(seed),
        };
        out.map_err(|e| match e {
            Error::InvariantViolation(msg) => violation(cell, trial, seed, msg),
            e => e,
        })
    }

    fn entry_checks(&self) -> u64 {
        matches!(self, Sampler::Bernoulli(_)) as u64
    }

    fn clamped(&self) -> usize {
        match self {
            Sampler::Bernoulli(s) => s.clamped(),
            Sampler::Replacement(..) => 0,
        }
    }

    fn expected_nnz(&self, m: f64) -> f64 {
        match self {
            Sampler::Bernoulli(s) => s.keep_probs().iter().sum(),
            Sampler::Replacement(..) => m,
        }
    }
}

/// The predictors assume `N >= n`; a wide matrix is analysed through its
/// transpose (same singular values, left and right factors swapped).
fn prepare(cfg: &TrialConfig, notes: &mut Vec<String>) -> Result<(Matrix, bool)> {
    let a = cfg.matrix.build()?;
    if a.rows() < a.cols() {
        notes.push(format!(
            "{}x{} input analysed as its transpose (predictors assume N >= n)",
            a.rows(),
            a.cols()
        ));
        return Ok((a.transpose(), true));
    }
    Ok((a, false))
}

fn common_cell_info(
    rec: &mut crate::mcverify::CellRecord,
    pred: &SparsifyPredictors,
    sampler: &Sampler,
    m: f64,
    m_max: f64,
) {
    rec.flags.insert("feasible".into(), m <= m_max * (1.0 + 1e-12));
    rec.flags.insert("clamped".into(), sampler.clamped() > 0);
    if let Some(r0) = pred.r0 {
        rec.flags.insert("rankWithinR0".into(), pred.rank as f64 <= r0);
    }
    rec.extras.insert("mMax".into(), m_max);
    rec.extras.insert("clampedEntries".into(), sampler.clamped() as f64);
    rec.extras.insert("expectedNnz".into(), sampler.expected_nnz(m));
    rec.extras.insert("rho".into(), pred.rho);
    rec.extras.insert("L".into(), pred.entry_bound);
}

/// Relative singular-value errors `|σ̃_j/σ_j − 1|` of `S̃(A)` (or `S(A)`)
/// for `j = 1..=J`, with `J` the configured index or the rank.
pub fn run_sparsify_sv(cfg: &TrialConfig) -> Result<TrialReport> {
    cfg.validate()?;
    let mut notes = Vec::new();
    let (a, _) = prepare(cfg, &mut notes)?;
    let f = svd(&a, default_rank_tol(a.rows(), a.cols()))?;
    let rank = f.numerical_rank();
    if rank == 0 {
        return Err(Error::ZeroMatrix("sparsify-sv experiment"));
    }
    let jmax = cfg.j.unwrap_or(rank).min(rank);
    let sigma: Vec<f64> = f.sigma().to_vec();
    let m_max = feasible_m_max(&a)?;

    let mut names: Vec<String> = (1..=jmax).map(|j| format!("relErr_{j}")).collect();
    names.extend(["normE".to_string(), "nnz".to_string()]);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let rel_names: Vec<(String, String, String)> = (1..=jmax)
        .map(|j| (format!("relErr_{j}"), format!("newSvRel_{j}"), format!("weylRel_{j}")))
        .collect();

    let mut invariants = BTreeMap::new();
    let mut cells = Vec::with_capacity(cfg.grid.len());
    for (cell, &m) in cfg.grid.iter().enumerate() {
        let sampler = Sampler::new(cfg, &a, m)?;
        let samples = run_cell(cfg, cell, &name_refs, &mut invariants, |trial, seed| {
            let out = sampler.draw(cell, trial, seed)?;
            let norm_e = spectral_norm(&out.error)?;
            let st = singular_values(&out.result)?;
            let weyl = weyl_holds(&sigma, &st, norm_e).map_err(|w| violation(cell, trial, seed, w))?;
            let mut values: Vec<f64> = (0..jmax).map(|i| (st[i] / sigma[i] - 1.0).abs()).collect();
            values.push(norm_e);
            values.push(out.nnz as f64);
            Ok(TrialOut {
                values,
                checks: vec![("weyl", weyl), ("entryBound", sampler.entry_checks())],
            })
        })?;
        let pred = SparsifyPredictors::compute(&a, m, -cfg.eps.ln())?;
        let report = pred.to_report();
        let mut pairs: Vec<(&str, &str)> = vec![("normE", "normTail"), ("normE", "R")];
        for (metric, new_sv, weyl) in &rel_names {
            pairs.push((metric, new_sv));
            pairs.push((metric, weyl));
        }
        let mut rec = cell_record(cfg, cell, m, &samples, report.predictors, &pairs);
        common_cell_info(&mut rec, &pred, &sampler, m, m_max);
        notes.extend(report.notes.iter().map(|n| format!("m = {m}: {n}")));
        cells.push(rec);
    }
    Ok(finish(cfg, cells, Vec::new(), invariants, notes))
}

/// `sin∠(Ũ_j, U_j)`, `sin∠(Ṽ_j, V_j)` and the Wedin level `2‖E‖/δ_j`
/// measured trial by trial.
pub fn run_sparsify_subspace(cfg: &TrialConfig) -> Result<TrialReport> {
    cfg.validate()?;
    let mut notes = Vec::new();
    let (a, transposed) = prepare(cfg, &mut notes)?;
    let tol = default_rank_tol(a.rows(), a.cols());
    let f = svd(&a, tol)?;
    let rank = f.numerical_rank();
    if rank == 0 {
        return Err(Error::ZeroMatrix("sparsify-subspace experiment"));
    }
    let j = cfg.j.unwrap_or(1);
    if j > rank {
        return Err(Error::invalid(format!("subspace index {j} exceeds the rank {rank}")));
    }
    let (u_j, v_j) = (f.left_subspace(j)?, f.right_subspace(j)?);
    let sigma: Vec<f64> = f.sigma().to_vec();
    let delta = crate::matcore::spectral_gap(&f, j)?;
    let deloc_a = f.delocalization(rank);
    let m_max = feasible_m_max(&a)?;
    let (sin_u_name, sin_v_name) = if transposed { ("sinV", "sinU") } else { ("sinU", "sinV") };
    let names = [sin_u_name, sin_v_name, "normE", "wedinEmpirical", "sinUOverWedin", "delocPerturbed"];
    let (new_sub, wedin_r) = (format!("newSubspace_{j}"), format!("wedin_{j}"));

    let mut invariants = BTreeMap::new();
    let mut cells = Vec::with_capacity(cfg.grid.len());
    for (cell, &m) in cfg.grid.iter().enumerate() {
        let sampler = Sampler::new(cfg, &a, m)?;
        let samples = run_cell(cfg, cell, &names, &mut invariants, |trial, seed| {
            let out = sampler.draw(cell, trial, seed)?;
            let norm_e = spectral_norm(&out.error)?;
            let ft = svd(&out.result, tol)?;
            let weyl = weyl_holds(&sigma, ft.sigma(), norm_e).map_err(|w| violation(cell, trial, seed, w))?;
            let sin_u = sin_angle(&ft.left_subspace(j)?, &u_j)?;
            let sin_v = sin_angle(&ft.right_subspace(j)?, &v_j)?;
            for (name, s) in [("left", sin_u), ("right", sin_v)] {
                if !(0.0..=1.0).contains(&s) {
                    return Err(violation(cell, trial, seed, format!("{name} sin angle {s} outside [0, 1]")));
                }
            }
            let wedin = crate::bounds::ratio(2.0 * norm_e, delta);
            let u_ratio = crate::bounds::ratio(if transposed { sin_v } else { sin_u }, wedin);
            Ok(TrialOut {
                values: vec![sin_u, sin_v, norm_e, wedin, u_ratio, ft.delocalization(rank)],
                checks: vec![("weyl", weyl), ("sinRange", 2), ("entryBound", sampler.entry_checks())],
            })
        })?;
        let pred = SparsifyPredictors::compute(&a, m, -cfg.eps.ln())?;
        let report = pred.to_report();
        let pairs = [
            ("sinU", new_sub.as_str()),
            ("sinU", wedin_r.as_str()),
            ("sinV", new_sub.as_str()),
            ("normE", "normTail"),
        ];
        let mut rec = cell_record(cfg, cell, m, &samples, report.predictors, &pairs);
        common_cell_info(&mut rec, &pred, &sampler, m, m_max);
        let (r, s) = (pred.radius, sigma[j - 1]);
        rec.flags.insert("smallGapRegime".into(), r >= 2.0 * delta && r <= 0.3 * (delta * s).sqrt());
        rec.extras.insert("delta".into(), delta);
        rec.extras.insert("delocOriginal".into(), deloc_a);
        rec.extras.insert("regimeLower".into(), 2.0 * delta);
        rec.extras.insert("regimeUpper".into(), 0.3 * (delta * s).sqrt());
        notes.extend(report.notes.iter().map(|n| format!("m = {m}: {n}")));
        cells.push(rec);
    }

    let mut checks = Vec::new();
    if let Some(c) = cfg.acceptance.max_wedin_ratio {
        let need = cfg.acceptance.min_cell_fraction.unwrap_or(0.9);
        let in_regime: Vec<_> = cells.iter().filter(|c| c.flags["smallGapRegime"]).collect();
        let good = in_regime
            .iter()
            .filter(|cell| {
                let (su, w) = (cell.median("sinU").unwrap(), cell.median("wedinEmpirical").unwrap());
                su <= c * w
            })
            .count();
        let check = if in_regime.is_empty() {
            Check::new(
                "wedinImprovement",
                false,
                format!("no cell in the small-gap regime 2δ <= R <= 0.3√(δσ) (δ = {delta:.4e})"),
            )
        } else {
            let frac = good as f64 / in_regime.len() as f64;
            Check::new(
                "wedinImprovement",
                frac >= need,
                format!(
                    "median sinU <= {c}·median(2‖E‖/δ) in {good}/{} regime cells ({:.1}%, need {:.1}%)",
                    in_regime.len(),
                    100.0 * frac,
                    100.0 * need
                ),
            )
        };
        checks.push(check);
    }
    notes.push(format!(
        "δ_{j} = {delta:.6e}; delocalization of A's leading vectors = {deloc_a:.4}, of S̃(A)'s in delocPerturbed"
    ));
    Ok(finish(cfg, cells, checks, invariants, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcverify::{ExperimentKind, MatrixSpec};
    use crate::sparsify::ClampPolicy;

    #[test]
    fn full_budget_on_ones_has_zero_error() {
        let cfg = TrialConfig::new(
            ExperimentKind::SparsifySv,
            MatrixSpec::Ones { rows: 6, cols: 6 },
            vec![36.0],
            10,
            1,
        );
        let rep = run_sparsify_sv(&cfg).unwrap();
        let c = &rep.cells[0];
        assert_eq!(c.metrics["relErr_1"].max, 0.0);
        assert_eq!(c.metrics["normE"].max, 0.0);
        assert_eq!(c.metrics["nnz"].min, 36.0);
        assert_eq!(rep.invariant_checks["weyl"], 60);
    }

    #[test]
    fn full_budget_subspace_angle_is_zero() {
        let mut cfg = TrialConfig::new(
            ExperimentKind::SparsifySubspace,
            MatrixSpec::Ones { rows: 5, cols: 5 },
            vec![25.0],
            5,
            2,
        );
        cfg.j = Some(1);
        let rep = run_sparsify_subspace(&cfg).unwrap();
        assert!(rep.cells[0].metrics["sinU"].max < 1e-12);
        assert!(rep.cells[0].metrics["sinV"].max < 1e-12);
    }

    #[test]
    fn strict_infeasible_budget_errors() {
        let cfg = TrialConfig::new(
            ExperimentKind::SparsifySv,
            MatrixSpec::Explicit {
                rows: 2,
                cols: 2,
                data: vec![3.0, 0.0, 0.0, 4.0],
            },
            vec![2.0],
            3,
            1,
        );
        assert!(matches!(run_sparsify_sv(&cfg), Err(Error::Infeasible { .. })));
        let mut clamped = cfg.clone();
        clamped.clamp = ClampPolicy::Clamp;
        let rep = run_sparsify_sv(&clamped).unwrap();
        assert!(rep.cells[0].flags["clamped"]);
        assert!(!rep.cells[0].flags["feasible"]);
    }

    #[test]
    fn replacement_runs() {
        let mut cfg = TrialConfig::new(
            ExperimentKind::SparsifySv,
            MatrixSpec::LowRank {
                rows: 10,
                cols: 8,
                spectrum: vec![2.0, 1.0],
                seed: 5,
            },
            vec![20.0, 40.0, 80.0],
            20,
            3,
        );
        cfg.method = Method::Replacement;
        let rep = run_sparsify_sv(&cfg).unwrap();
        assert_eq!(rep.cells.len(), 3);
        assert!(rep.cells[0].metrics.contains_key("relErr_2"));
        assert!(!rep.invariant_checks.contains_key("entryBound") || rep.invariant_checks["entryBound"] == 0);
    }

    #[test]
    fn wide_matrix_is_transposed() {
        let mut cfg = TrialConfig::new(
            ExperimentKind::SparsifySubspace,
            MatrixSpec::LowRank {
                rows: 4,
                cols: 9,
                spectrum: vec![3.0, 1.0],
                seed: 8,
            },
            vec![10.0],
            4,
            3,
        );
        cfg.clamp = ClampPolicy::Clamp;
        let rep = run_sparsify_subspace(&cfg).unwrap();
        assert!(rep.notes.iter().any(|n| n.contains("transpose")));
    }
}
