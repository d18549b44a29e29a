//! Tails of the bilinear form `xᵀ E y` for fixed unit vectors.

use std::collections::BTreeMap;

use crate::bounds::{bernstein_tail, bilinear_t, chebyshev_tail, projected_tail};
use crate::error::{Error, Result};
use crate::matcore::{default_rank_tol, haar_orthonormal, singular_values, spectral_norm, svd, DenseMatrix};
use crate::mcverify::stats::{mean, variance};
use crate::mcverify::{cell_record, finish, run_cell, violation, weyl_holds, Check, TrialConfig, TrialOut, TrialReport, VectorChoice};
use crate::rng::derive_seed;
use crate::sparsify::{entry_variance_bounds, BernoulliSampler, Method};
use crate::Matrix;

/// Stream index reserved for the random test vectors (never a cell index).
const VECTOR_STREAM: u64 = u64::MAX;

fn unit_vectors(cfg: &TrialConfig, a: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let (rows, cols) = a.dims();
    Ok(match cfg.vectors {
        VectorChoice::Random => {
            let x: Matrix = haar_orthonormal(rows, 1, derive_seed(cfg.master_seed, VECTOR_STREAM, 0));
            let y: Matrix = haar_orthonormal(cols, 1, derive_seed(cfg.master_seed, VECTOR_STREAM, 1));
            (x.into_vec(), y.into_vec())
        }
        VectorChoice::Flat => (
            vec![1.0 / (rows as f64).sqrt(); rows],
            vec![1.0 / (cols as f64).sqrt(); cols],
        ),
        VectorChoice::Basis => {
            let mut x = vec![0.0; rows];
            let mut y = vec![0.0; cols];
            x[0] = 1.0;
            y[0] = 1.0;
            (x, y)
        }
        VectorChoice::Leading => {
            let f = svd(a, default_rank_tol(rows, cols))?;
            (f.u().column(0), f.v().column(0))
        }
    })
}

fn bilinear(x: &[f64], e: &Matrix, y: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi * e.row(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Binomial standard error at the bound level `q` (clipped to `[0, 1]`).
fn binomial_se(q: f64, n: usize) -> f64 {
    let q = q.clamp(0.0, 1.0);
    (q * (1.0 - q) / n as f64).sqrt()
}

/// Samples `E = S̃(A) − A` and records `xᵀEy` (and `‖U_rᵀ E V_r‖` when a
/// projection rank is set), then compares the empirical variance and tails
/// with `ρ = 2‖A‖_2²/m`.
pub fn run_concentration(cfg: &TrialConfig) -> Result<TrialReport> {
    cfg.validate()?;
    if cfg.method != Method::Bernoulli {
        return Err(Error::invalid("concentration experiments use the Bernoulli sampler"));
    }
    let a = cfg.matrix.build()?;
    let (x, y) = unit_vectors(cfg, &a)?;
    let x_inf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let y_inf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let delta_inf = x_inf.max(y_inf);
    let sigma = singular_values(&a)?;
    let l1_product = x.iter().map(|v| v.abs()).sum::<f64>() * y.iter().map(|v| v.abs()).sum::<f64>();

    let projection = match cfg.projection_rank {
        Some(r) => {
            let f = svd(&a, default_rank_tol(a.rows(), a.cols()))?;
            if r > f.k() {
                return Err(Error::invalid(format!("projection rank {r} exceeds {}", f.k())));
            }
            let u = DenseMatrix::from_fn(a.rows(), r, |i, k| *f.u().get(i, k));
            let v = DenseMatrix::from_fn(a.cols(), r, |i, k| *f.v().get(i, k));
            Some((r, u.transpose(), v))
        }
        None => None,
    };
    let names: Vec<&str> = if projection.is_some() {
        vec!["bilinear", "absBilinear", "projectedNorm"]
    } else {
        vec!["bilinear", "absBilinear"]
    };
    let n = cfg.trials;

    let mut invariants = BTreeMap::new();
    let mut cells = Vec::with_capacity(cfg.grid.len());
    let mut checks = Vec::new();
    for (cell, &m) in cfg.grid.iter().enumerate() {
        let sampler = BernoulliSampler::new(&a, m, cfg.clamp)?;
        let l = sampler.entry_bound();
        let cap = l1_product * l * (1.0 + 1e-12);
        let samples = run_cell(cfg, cell, &names, &mut invariants, |trial, seed| {
            let out = sampler.sample(seed).map_err(|e| match e {
                Error::InvariantViolation(msg) => violation(cell, trial, seed, msg),
                e => e,
            })?;
            let b = bilinear(&x, &out.error, &y);
            if b.abs() > cap {
                return Err(violation(cell, trial, seed, format!("|xᵀEy| = {:e} above Σ|x_i||y_j|L = {cap:e}", b.abs())));
            }
            let norm_e = spectral_norm(&out.error)?;
            let weyl = weyl_holds(&sigma, &singular_values(&out.result)?, norm_e)
                .map_err(|w| violation(cell, trial, seed, w))?;
            let mut values = vec![b, b.abs()];
            if let Some((_, ut, v)) = &projection {
                values.push(spectral_norm(&ut.matmul(&out.error)?.matmul(v)?)?);
            }
            Ok(TrialOut {
                values,
                checks: vec![("entryBound", 1), ("bilinearCap", 1), ("weyl", weyl)],
            })
        })?;
        let (rho, _) = entry_variance_bounds(&a, m)?;
        let t_scale = bilinear_t(rho, l, delta_inf)?;
        let sqrt_rho = rho.sqrt();

        let mut rec = cell_record(cfg, cell, m, &samples, BTreeMap::new(), &[]);
        rec.predictors.insert("rho".into(), crate::bounds::Predictor::raw(rho));
        rec.predictors.insert("L".into(), crate::bounds::Predictor::raw(l));
        rec.predictors.insert("T".into(), crate::bounds::Predictor::raw(t_scale));
        rec.flags.insert("clamped".into(), sampler.clamped() > 0);

        let bs = samples.get("bilinear");
        let var = variance(bs);
        let var_cap = rho * (1.0 + 5.0 / (n as f64).sqrt());
        rec.extras.insert("mean".into(), mean(bs));
        rec.extras.insert("variance".into(), var);
        rec.extras.insert("varianceCap".into(), var_cap);
        checks.push(Check::new(
            format!("variance[m={m}]"),
            var <= var_cap,
            format!("Var(xᵀEy) = {var:.4e} <= ρ(1 + 5/√T) = {var_cap:.4e}"),
        ));

        let abs = samples.get("absBilinear");
        for &t in &cfg.t_grid {
            let freq = abs.iter().filter(|v| **v > sqrt_rho * t).count() as f64 / n as f64;
            let q = chebyshev_tail(t);
            let allowed = q + 3.0 * binomial_se(q, n);
            rec.extras.insert(format!("tailFreq_{t}"), freq);
            rec.extras.insert(format!("chebyshevAllowed_{t}"), allowed);
            checks.push(Check::new(
                format!("chebyshevTail[m={m},t={t}]"),
                freq <= allowed,
                format!("P(|xᵀEy| > √ρ·{t}) = {freq:.5} <= t⁻² + 3SE = {allowed:.5}"),
            ));

            let freq_b = abs.iter().filter(|v| **v > t_scale * t).count() as f64 / n as f64;
            let qb = bernstein_tail(t);
            let allowed_b = qb + 3.0 * binomial_se(qb, n);
            rec.extras.insert(format!("bernsteinFreq_{t}"), freq_b);
            checks.push(Check::new(
                format!("bernsteinTail[m={m},t={t}]"),
                freq_b <= allowed_b,
                format!("P(|xᵀEy| > T·{t}) = {freq_b:.5} <= 2e^(-min(t²,t)/2) + 3SE = {allowed_b:.5}"),
            ));

            if let Some((r, ..)) = &projection {
                let pn = samples.get("projectedNorm");
                let freq_p = pn.iter().filter(|v| **v > sqrt_rho * t).count() as f64 / n as f64;
                let qp = projected_tail(*r, t);
                let allowed_p = qp + 3.0 * binomial_se(qp, n);
                rec.extras.insert(format!("projectedFreq_{t}"), freq_p);
                checks.push(Check::new(
                    format!("projectedTail[m={m},t={t}]"),
                    freq_p <= allowed_p,
                    format!("P(‖UᵀEV‖ > √ρ·{t}) = {freq_p:.5} <= 49^(r+1)/t² + 3SE"),
                ));
            }
        }
        cells.push(rec);
    }
    let notes = vec![format!(
        "‖x‖_∞ = {x_inf:.4}, ‖y‖_∞ = {y_inf:.4}; binomial SE evaluated at the bound level"
    )];
    Ok(finish(cfg, cells, checks, invariants, notes))
}
