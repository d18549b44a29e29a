//! Noisy partial observation of a matrix and the rescaled projection
//! estimator `Ã_j = P_{Ũ_j} B̃`, where `B̃ = B / p` and `Ũ_j` spans the top
//! `j` left singular vectors of `B̃`.
//!
//! Each entry is observed independently with probability `p`, with additive
//! noise: `b_ij = (a_ij + z_ij) χ_ij`. Then `B̃ − A = E + F` with
//! `E_ij = a_ij (χ_ij − p)/p` and `F_ij = z_ij χ_ij / p`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::{ratio, ser_f64, BoundReport, Predictor};
use crate::error::{Error, Result};
use crate::matcore::{leading_left_vectors, spectral_gap, svd, DenseMatrix};
use crate::rng;
use crate::scalar::{Real, Scalar};

/// Failure budget used in reports unless overridden.
pub const DEFAULT_FAILURE_BUDGET: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NoiseKind {
    /// `N(0, σ²)`; its tail satisfies `P(|ξ| > t) <= 2 exp(−t²/2σ²)`.
    Gaussian,
    /// Uniform on `[−σ, σ]`.
    BoundedUniform,
    #[default]
    None,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "boundedUniform" | "bounded-uniform" | "uniform" => Ok(NoiseKind::BoundedUniform),
            "none" => Ok(NoiseKind::None),
            other => Err(Error::invalid(format!("unknown noise kind '{other}'"))),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::BoundedUniform => "boundedUniform",
            NoiseKind::None => "none",
        })
    }
}

/// Parameters of an observation, as written next to the data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservationParams {
    pub rows: usize,
    pub cols: usize,
    pub p: f64,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub tool_version: String,
}

/// Observed entries `b_ij` (zero where unobserved), the mask `χ`, and the
/// sampling parameters. Generated sets also keep the realized noise.
#[derive(Clone, Debug)]
pub struct ObservationSet<T> {
    observed: DenseMatrix<T>,
    mask: Vec<bool>,
    p: T,
    noise: NoiseKind,
    sigma: f64,
    seed: u64,
    noise_values: Option<DenseMatrix<T>>,
}

fn check_p<T: Scalar>(p: &T) -> Result<()> {
    if !(*p > T::zero() && *p <= T::one()) {
        return Err(Error::invalid(format!(
            "observation probability must lie in (0, 1], got {}",
            p.approx_f64()
        )));
    }
    Ok(())
}

fn check_sigma(noise: NoiseKind, sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be finite and >= 0, got {sigma}")));
    }
    if noise == NoiseKind::None && sigma > 0.0 {
        return Err(Error::invalid("noise kind 'none' requires sigma = 0"));
    }
    Ok(())
}

impl<T: Scalar> ObservationSet<T> {
    /// Assembles an observation read from storage; the realized noise is
    /// unknown.
    pub fn from_parts(
        observed: DenseMatrix<T>,
        mask: Vec<bool>,
        p: T,
        noise: NoiseKind,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        check_p(&p)?;
        check_sigma(noise, sigma)?;
        if mask.len() != observed.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries, observations {}",
                mask.len(),
                observed.len()
            )));
        }
        if let Some((i, j, _)) = observed
            .entries()
            .zip(&mask)
            .find(|((_, _, b), &m)| !m && !b.is_zero())
            .map(|(e, _)| e)
        {
            return Err(Error::invalid(format!(
                "entry ({i}, {j}) is unobserved but nonzero"
            )));
        }
        Ok(ObservationSet {
            observed,
            mask,
            p,
            noise,
            sigma,
            seed,
            noise_values: None,
        })
    }

    pub fn observed(&self) -> &DenseMatrix<T> {
        &self.observed
    }

    /// Row-major mask.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.observed.cols() + j]
    }

    pub fn mask_matrix(&self) -> DenseMatrix<T> {
        let cols = self.observed.cols();
        DenseMatrix::from_fn(self.observed.rows(), cols, |i, j| {
            if self.mask[i * cols + j] {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn p(&self) -> &T {
        &self.p
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Realized `z_ij` for every entry (observed or not), when generated here.
    pub fn noise_values(&self) -> Option<&DenseMatrix<T>> {
        self.noise_values.as_ref()
    }

    pub fn params(&self) -> ObservationParams {
        ObservationParams {
            rows: self.observed.rows(),
            cols: self.observed.cols(),
            p: self.p.approx_f64(),
            noise: self.noise,
            sigma: self.sigma,
            seed: self.seed,
            tool_version: crate::TOOL_VERSION.to_string(),
        }
    }
}

/// Draws `χ_ij ~ Bernoulli(p)` and noise `z_ij`, and forms `b_ij = (a_ij + z_ij) χ_ij`.
///
/// The stream consumes one uniform and then one noise draw per entry in
/// row-major order, whatever the mask.
pub fn observe<T: Scalar>(
    a: &DenseMatrix<T>,
    p: T,
    noise: NoiseKind,
    sigma: f64,
    seed: u64,
) -> Result<ObservationSet<T>> {
    check_p(&p)?;
    check_sigma(noise, sigma)?;
    let mut g = rng::from_seed(seed);
    let (rows, cols) = a.dims();
    let mut mask = Vec::with_capacity(a.len());
    let mut z = DenseMatrix::zeros(rows, cols);
    let mut observed = DenseMatrix::zeros(rows, cols);
    for (k, x) in a.as_slice().iter().enumerate() {
        let u = rng::uniform(&mut g);
        let zk = match noise {
            NoiseKind::Gaussian => sigma * rng::standard_normal(&mut g),
            NoiseKind::BoundedUniform => sigma * (2.0 * rng::uniform(&mut g) - 1.0),
            NoiseKind::None => 0.0,
        };
        let zt = T::from_lit(zk);
        let keep = T::from_lit(u) < p;
        let (i, j) = (k / cols, k % cols);
        if keep {
            observed.set(i, j, x.clone() + zt.clone());
        }
        z.set(i, j, zt);
        mask.push(keep);
    }
    Ok(ObservationSet {
        observed,
        mask,
        p,
        noise,
        sigma,
        seed,
        noise_values: Some(z),
    })
}

/// `B̃ = B / p`.
pub fn rescale<T: Scalar>(obs: &ObservationSet<T>) -> DenseMatrix<T> {
    let p = obs.p.clone();
    obs.observed.map(|b| b.clone() / p.clone())
}

/// `H = B̃ − A` together with its sampling part `E` and noise part `F`.
#[derive(Clone, Debug)]
pub struct NoiseDecomposition<T> {
    pub h: DenseMatrix<T>,
    pub e: DenseMatrix<T>,
    pub f: DenseMatrix<T>,
}

impl<T: Scalar> NoiseDecomposition<T> {
    /// `H == E + F` entry for entry (exact for rational scalars).
    pub fn is_exact(&self) -> bool {
        self.e.add(&self.f).is_ok_and(|s| s == self.h)
    }
}

impl<T: Real> NoiseDecomposition<T> {
    /// `max |H − (E + F)|`.
    pub fn residual(&self) -> T {
        let sum = self.e.add(&self.f).expect("same shape");
        self.h.max_abs_diff(&sum).expect("same shape")
    }
}

/// Splits `B̃ − A` into `E_ij = a_ij (χ_ij − p)/p` and `F_ij = z_ij χ_ij / p`.
/// Needs the realized noise, so only works on sets made by [`observe`].
pub fn decompose<T: Scalar>(obs: &ObservationSet<T>, a: &DenseMatrix<T>) -> Result<NoiseDecomposition<T>> {
    let z = obs
        .noise_values
        .as_ref()
        .ok_or_else(|| Error::invalid("decomposition needs the realized noise"))?;
    if a.dims() != obs.observed.dims() {
        return Err(Error::DimensionMismatch("truth vs observation".into()));
    }
    let p = obs.p.clone();
    let h = rescale(obs).sub(a)?;
    let cols = a.cols();
    let chi = |i: usize, j: usize| {
        if obs.mask[i * cols + j] {
            T::one()
        } else {
            T::zero()
        }
    };
    let e = DenseMatrix::from_fn(a.rows(), cols, |i, j| {
        a.get(i, j).clone() * (chi(i, j) - p.clone()) / p.clone()
    });
    let f = DenseMatrix::from_fn(a.rows(), cols, |i, j| z.get(i, j).clone() * chi(i, j) / p.clone());
    Ok(NoiseDecomposition { h, e, f })
}

/// `P_{Ũ_j} B` for the top-`j` left singular subspace of `b`; also returns
/// the singular values of `b`.
pub fn project_leading<T: Real>(b: &DenseMatrix<T>, j: usize) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let (u, sigma) = leading_left_vectors(b, j)?;
    let coeffs = u.transpose().matmul(b)?;
    Ok((u.matmul(&coeffs)?, sigma))
}

/// `Ã_j = P_{Ũ_j} B̃`.
pub fn estimate<T: Real>(obs: &ObservationSet<T>, j: usize) -> Result<DenseMatrix<T>> {
    Ok(project_leading(&rescale(obs), j)?.0)
}

/// `‖A(k) − Ã(k)‖` for column `k`.
pub fn column_estimate_error<T: Real>(a: &DenseMatrix<T>, est: &DenseMatrix<T>, k: usize) -> Result<T> {
    if a.dims() != est.dims() {
        return Err(Error::DimensionMismatch("truth vs estimate".into()));
    }
    if k >= a.cols() {
        return Err(Error::invalid(format!("column {k} out of range 0..{}", a.cols())));
    }
    Ok(a.sub(est)?.column_norm(k))
}

/// `𝓑 = √(N/p) ‖A‖_max + (σ/p) √N + (‖A‖_max/p) √(log N)`, the
/// high-probability level for `‖B̃ − A‖`.
pub fn norm_level(rows: usize, p: f64, max_abs: f64, sigma: f64) -> f64 {
    let n = rows as f64;
    (n / p).sqrt() * max_abs + sigma / p * n.sqrt() + max_abs / p * n.ln().sqrt()
}

/// Descriptive quantities for the dense-data regime (order-one entries,
/// constant `p` and `σ`, comparable dimensions). Reported, not judged.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletionRegime {
    pub mean_square_entry: f64,
    pub max_abs: f64,
    pub aspect_ratio: f64,
    pub p: f64,
    pub sigma: f64,
}

/// All completion predictors for one `(A, p, σ, ε)`.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletionPredictors {
    pub rows: usize,
    pub cols: usize,
    pub p: f64,
    pub sigma: f64,
    pub eps: f64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `𝓑`.
    pub norm_level: f64,
    pub rho1: f64,
    pub l1: f64,
    pub rho2: f64,
    pub t1: f64,
    /// Relative error of `‖B̃‖` against `‖A‖`, with its precondition flag.
    pub leading_sv_rel: Predictor,
    /// Relative error of `σ_j(B̃)`, `j = 1..=r`.
    pub sv_rel: Vec<Predictor>,
    /// `sin∠(Ũ_j, U_j)`, `j = 1..=r`.
    pub subspace: Vec<Predictor>,
    /// `‖A − Ã_r‖`.
    pub full_recovery: Predictor,
    /// `‖P_{U_j} A − Ã_j‖`.
    pub truncated: Vec<Predictor>,
    /// `‖A − Ã_j‖`: the truncated bound plus `σ_{j+1}`.
    pub truncated_with_tail: Vec<Predictor>,
    /// `j` minimizing `truncated_with_tail`.
    pub best_j: usize,
    /// `‖A(k) − Ã(k)‖` for every column `k`.
    pub column: Vec<Predictor>,
    pub regime: CompletionRegime,
    #[serde(serialize_with = "ser_f64")]
    pub precondition_level: f64,
}

impl CompletionPredictors {
    pub fn compute<T: Real>(a: &DenseMatrix<T>, p: f64, sigma: f64, eps: f64) -> Result<Self> {
        if a.rows() < a.cols() {
            return Err(Error::invalid(format!(
                "predictors assume N >= n, got {}x{}; transpose the input",
                a.rows(),
                a.cols()
            )));
        }
        check_p(&p)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("noise level must be finite and >= 0"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid("failure budget must be positive"));
        }
        let f = svd(a, crate::matcore::default_rank_tol(a.rows(), a.cols()))?;
        let r = f.numerical_rank();
        if r == 0 {
            return Err(Error::ZeroMatrix("completion predictors"));
        }
        let s: Vec<f64> = f.sigma()[..r].iter().map(|x| x.approx_f64()).collect();
        let gaps = (1..=r)
            .map(|j| spectral_gap(&f, j).map(|d| d.approx_f64()))
            .collect::<Result<Vec<_>>>()?;
        let max = a.max_abs().approx_f64();
        let big_n = a.rows() as f64;
        let rf = r as f64;
        let b = norm_level(a.rows(), p, max, sigma);

        let rho1 = max * max / p;
        let l1 = max / p;
        let rho2 = sigma * sigma / p;
        let t1 = rho1.sqrt() + l1 / 3.0;

        let precondition_level = 4.0 * rf.powi(3) / (eps * p).sqrt() * (max + sigma);
        let s1 = s[0];
        let leading = 4.0
            * (ratio(b.powi(3), s1.powi(3)) + ratio(b * b, s1 * s1) + rf.powi(3) * (max + sigma) / (eps * p).sqrt());
        let leading_sv_rel = Predictor::raw(leading).with_flag("sigma1AbovePrecondition", s1 >= precondition_level);

        let entry_scale = max / p.sqrt() + (max + sigma) / p;
        let mut sv_rel = Vec::with_capacity(r);
        let mut subspace = Vec::with_capacity(r);
        let mut truncated = Vec::with_capacity(r);
        let mut truncated_with_tail = Vec::with_capacity(r);
        let r32 = rf.powf(1.5);
        for j in 1..=r {
            let (sj, dj, jf) = (s[j - 1], gaps[j - 1], j as f64);
            sv_rel.push(Predictor::raw(
                rf / sj * entry_scale + 4.0 * jf.sqrt() * b * b / (sj * sj) + 4.0 * jf * b.powi(3) / sj.powi(3),
            ));
            subspace.push(Predictor::unit(
                4.0 * (2.0 * jf).sqrt() * (ratio(rf, dj) * entry_scale + b / sj + ratio(b * b, sj * dj)),
            ));
            let t = r32 * ratio(s1, dj) + big_n.sqrt() * s1 / sj;
            let next = if j < r { s[j] } else { 0.0 };
            truncated.push(Predictor::raw(t));
            truncated_with_tail.push(Predictor::raw(t + next));
        }
        let best_j = truncated_with_tail
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bj, bv), (k, p)| if p.value < bv { (k, p.value) } else { (bj, bv) })
            .0
            + 1;
        let full_recovery = Predictor::raw((r32 + big_n.sqrt()) * s1 / s[r - 1]);
        let column = (0..a.cols())
            .map(|k| {
                let ak = a.column_norm(k).approx_f64();
                Predictor::raw((r32 + big_n.sqrt()) / s[r - 1] * (ak + big_n.sqrt()) + rf.sqrt())
            })
            .collect();
        let regime = CompletionRegime {
            mean_square_entry: a.sum_squares().approx_f64() / (a.len() as f64),
            max_abs: max,
            aspect_ratio: big_n / a.cols() as f64,
            p,
            sigma,
        };
        Ok(CompletionPredictors {
            rows: a.rows(),
            cols: a.cols(),
            p,
            sigma,
            eps,
            rank: r,
            singular_values: s,
            gaps,
            norm_level: b,
            rho1,
            l1,
            rho2,
            t1,
            leading_sv_rel,
            sv_rel,
            subspace,
            full_recovery,
            truncated,
            truncated_with_tail,
            best_j,
            column,
            regime,
            precondition_level,
        })
    }

    pub fn to_report(&self) -> BoundReport {
        let mut rep = BoundReport::new("completion");
        rep.input("rows", self.rows as f64)
            .input("cols", self.cols as f64)
            .input("p", self.p)
            .input("sigma", self.sigma)
            .input("eps", self.eps)
            .input("rank", self.rank as f64)
            .input("meanSquareEntry", self.regime.mean_square_entry)
            .input("maxAbs", self.regime.max_abs)
            .input("aspectRatio", self.regime.aspect_ratio);
        rep.predictor("normLevel", Predictor::raw(self.norm_level))
            .predictor("rho1", Predictor::raw(self.rho1))
            .predictor("L1", Predictor::raw(self.l1))
            .predictor("rho2", Predictor::raw(self.rho2))
            .predictor("T1", Predictor::raw(self.t1))
            .predictor("leadingSvRel", self.leading_sv_rel.clone())
            .predictor("fullRecoveryBound", self.full_recovery.clone())
            .predictor("bestTruncation", Predictor::raw(self.best_j as f64));
        for j in 0..self.rank {
            let k = j + 1;
            rep.predictor(&format!("svRel_{k}"), self.sv_rel[j].clone())
                .predictor(&format!("subspace_{k}"), self.subspace[j].clone())
                .predictor(&format!("truncatedBound_{k}"), self.truncated[j].clone())
                .predictor(&format!("truncatedWithTail_{k}"), self.truncated_with_tail[j].clone());
        }
        for (k, c) in self.column.iter().enumerate() {
            rep.predictor(&format!("columnBound_{k}"), c.clone());
        }
        rep.regime(
            "sigma1AbovePrecondition",
            self.singular_values[0] >= self.precondition_level,
        );
        rep
    }
}
