//! Closed-form error predictors for sparsification.
//!
//! Every bound here is a *shape* predictor: absolute constants that the
//! underlying results leave unspecified are set to 1, so only the scaling in
//! `m`, `σ_j`, `δ_j`, … is meaningful. Logarithms are natural. The radius `R`
//! and `ε_j` use `log(2N)`; `r_0` and `h` use `log N`.
//!
//! Predictors for quantities that can never exceed 1 (`sin∠`) carry a capped
//! value and a `vacuous` flag when the raw value is above 1 (or infinite).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{norms, spectral_gap, svd, DenseMatrix, SvdFactors};
use crate::scalar::Real;

/// Serializes non-finite floats as strings (`"inf"`, `"-inf"`, `"nan"`),
/// which JSON cannot represent as numbers.
pub(crate) fn ser_f64<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub(crate) fn ser_opt_f64<S: serde::Serializer>(
    x: &Option<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_f64(v, s),
        None => s.serialize_none(),
    }
}

/// `num / den` with `0/0 = 0` and `x/0 = ∞` for `x > 0`.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// One evaluated predictor.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Predictor {
    #[serde(serialize_with = "ser_f64")]
    pub value: f64,
    /// `min(value, 1)` for predictors of quantities bounded by 1.
    #[serde(serialize_with = "ser_opt_f64")]
    pub capped: Option<f64>,
    pub vacuous: bool,
    pub regime_flags: BTreeMap<String, bool>,
}

impl Predictor {
    pub fn raw(value: f64) -> Self {
        Predictor {
            value,
            capped: None,
            vacuous: !value.is_finite(),
            regime_flags: BTreeMap::new(),
        }
    }

    /// Predictor of a quantity in `[0, 1]`.
    pub fn unit(value: f64) -> Self {
        Predictor {
            value,
            capped: Some(value.min(1.0)),
            vacuous: !(value <= 1.0),
            regime_flags: BTreeMap::new(),
        }
    }

    pub fn with_flag(mut self, name: &str, holds: bool) -> Self {
        self.regime_flags.insert(name.to_string(), holds);
        self
    }
}

fn check_tall(rows: usize, cols: usize) -> Result<()> {
    if rows < cols {
        return Err(Error::invalid(format!(
            "predictors assume N >= n, got {rows}x{cols}; transpose the input"
        )));
    }
    Ok(())
}

fn check_budget(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("sampling budget must be positive and finite"));
    }
    Ok(())
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("{name} must be nonnegative, got {x}")));
    }
    Ok(())
}

fn radius(l2: f64, rows: usize, m: f64) -> f64 {
    let n = rows as f64;
    l2 * (n * (2.0 * n).ln() / m).sqrt()
}

/// `R = ‖A‖_2 √(N log(2N) / m)`.
pub fn tropp_radius<T: Real>(a: &DenseMatrix<T>, m: f64) -> Result<f64> {
    check_tall(a.rows(), a.cols())?;
    check_budget(m)?;
    Ok(radius(a.frobenius().approx_f64(), a.rows(), m))
}

/// `r_0 = ¼ log(N log N / √m)`.
pub fn r0_threshold(rows: usize, m: f64) -> Result<f64> {
    if rows < 3 {
        return Err(Error::invalid("r0 needs N >= 3"));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::invalid("r0 needs m >= 1"));
    }
    let n = rows as f64;
    Ok(0.25 * (n * n.ln() / m.sqrt()).ln())
}

fn sigma_j<T: Real>(a: &DenseMatrix<T>, j: usize) -> Result<f64> {
    let s = crate::matcore::singular_values(a)?;
    if j == 0 || j > s.len() {
        return Err(Error::invalid(format!("j = {j} out of range 1..={}", s.len())));
    }
    let v = s[j - 1].approx_f64();
    if v <= 0.0 {
        return Err(Error::invalid(format!("sigma_{j} is zero")));
    }
    Ok(v)
}

/// Classical relative error `ε_j = R / σ_j` (Weyl's inequality combined with
/// the matrix-Chernoff norm bound).
pub fn weyl_rel_bound<T: Real>(j: usize, a: &DenseMatrix<T>, m: f64) -> Result<f64> {
    Ok(tropp_radius(a, m)? / sigma_j(a, j)?)
}

/// `√j ε_j²`.
pub fn new_sv_rel_bound<T: Real>(j: usize, a: &DenseMatrix<T>, m: f64) -> Result<f64> {
    let eps = weyl_rel_bound(j, a, m)?;
    Ok((j as f64).sqrt() * eps * eps)
}

/// `2‖E‖ / δ_j`.
pub fn wedin_bound(norm_e: f64, delta_j: f64) -> Result<Predictor> {
    check_nonneg("‖E‖", norm_e)?;
    check_nonneg("delta_j", delta_j)?;
    Ok(Predictor::unit(ratio(2.0 * norm_e, delta_j)))
}

/// `√j (r/δ_j + R/σ_j + R²/(σ_j δ_j))`.
pub fn new_subspace_bound(
    j: usize,
    r: usize,
    radius: f64,
    sigma_j: f64,
    delta_j: f64,
) -> Result<Predictor> {
    subspace_shape(j, r, radius, sigma_j, delta_j).map(Predictor::unit)
}

fn subspace_shape(j: usize, r: usize, level: f64, sigma_j: f64, delta_j: f64) -> Result<f64> {
    if j == 0 || j > r {
        return Err(Error::invalid(format!("need 1 <= j <= r, got j={j}, r={r}")));
    }
    check_nonneg("noise level", level)?;
    check_nonneg("sigma_j", sigma_j)?;
    check_nonneg("delta_j", delta_j)?;
    let s = ratio(r as f64, delta_j) + ratio(level, sigma_j) + ratio(level * level, sigma_j * delta_j);
    Ok((j as f64).sqrt() * s)
}

/// Delocalization parameter of the higher-rank refinement.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HParam {
    pub h: f64,
    /// Largest sup-norm among the leading `r` left and right singular vectors.
    pub delta_inf: f64,
    /// `r <= N / √m`.
    pub rank_small: bool,
    /// `δ² <= √(N/n) log N / r`.
    pub delocalized: bool,
}

/// `h = r (√(1/(N log N)) + δ² cs(A) √(n/(m log N)))`.
pub fn h_param<T: Real>(a: &DenseMatrix<T>, f: &SvdFactors<T>, m: f64) -> Result<HParam> {
    check_tall(a.rows(), a.cols())?;
    check_budget(m)?;
    if a.rows() < 2 {
        return Err(Error::invalid("h needs N >= 2"));
    }
    let r = f.numerical_rank();
    if r == 0 {
        return Err(Error::ZeroMatrix("h parameter"));
    }
    let cs = norms(a)?.cs.approx_f64();
    let (big_n, n) = (a.rows() as f64, a.cols() as f64);
    let delta = f.delocalization(r).approx_f64();
    let rf = r as f64;
    let log_n = big_n.ln();
    Ok(HParam {
        h: h_value(r, a.rows(), a.cols(), m, delta, cs),
        delta_inf: delta,
        rank_small: rf <= big_n / m.sqrt(),
        delocalized: delta * delta <= (big_n / n).sqrt() * log_n / rf,
    })
}

fn h_value(r: usize, rows: usize, cols: usize, m: f64, delta: f64, cs: f64) -> f64 {
    let (big_n, n) = (rows as f64, cols as f64);
    let log_n = big_n.ln();
    r as f64 * ((1.0 / (big_n * log_n)).sqrt() + delta * delta * cs * (n / (m * log_n)).sqrt())
}

/// High-probability level for `‖E‖` at tail `e^{-s}`, in two algebraic forms.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NormTail {
    pub s: f64,
    /// `4 ‖A‖_2 √(N/m)`.
    pub spectral_term: f64,
    /// `(‖A‖_1/m) √(log N + s)`.
    pub entry_term: f64,
    /// Sum of the two terms.
    pub total: f64,
    /// `‖A‖_2 (4√(N/m) + cs(A) (N/m) √(log N + s))`; equals `total` when
    /// `N = n` and dominates it when `N > n`.
    pub cs_form: f64,
}

pub fn norm_tail_bound<T: Real>(a: &DenseMatrix<T>, m: f64, s: f64) -> Result<NormTail> {
    check_tall(a.rows(), a.cols())?;
    check_budget(m)?;
    check_nonneg("s", s)?;
    let nm = norms(a)?;
    let (l1, l2, cs) = (nm.l1.approx_f64(), nm.l2.approx_f64(), nm.cs.approx_f64());
    let big_n = a.rows() as f64;
    let root_log = (big_n.ln() + s).sqrt();
    let spectral_term = 4.0 * l2 * (big_n / m).sqrt();
    let entry_term = l1 / m * root_log;
    let cs_form = l2 * (4.0 * (big_n / m).sqrt() + cs * big_n / m * root_log);
    Ok(NormTail {
        s,
        spectral_term,
        entry_term,
        total: spectral_term + entry_term,
        cs_form,
    })
}

/// Inputs of the generic perturbation bound: a bilinear concentration level
/// `t` and a spectral-norm level `M` for the noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneralBoundInputs {
    pub t: f64,
    pub big_m: f64,
    pub j: usize,
    pub r: usize,
    pub sigma_j: f64,
    /// `σ_j` of the perturbed matrix.
    pub sigma_j_perturbed: f64,
    pub delta_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneralBound {
    #[serde(serialize_with = "ser_f64")]
    pub sv_lower: f64,
    #[serde(serialize_with = "ser_f64")]
    pub sv_upper: f64,
    pub subspace: Predictor,
}

/// `σ_j' ∈ [σ_j − √j t, σ_j + √j (t + M²/σ_j' + M³/σ_j'²)]` and
/// `sin∠ ≤ √j (r/δ_j + M/σ_j + M²/(σ_j δ_j))`.
pub fn general_bound(inp: &GeneralBoundInputs) -> Result<GeneralBound> {
    check_nonneg("t", inp.t)?;
    check_nonneg("M", inp.big_m)?;
    check_nonneg("sigma_j'", inp.sigma_j_perturbed)?;
    let rj = (inp.j as f64).sqrt();
    let subspace = subspace_shape(inp.j, inp.r, inp.big_m, inp.sigma_j, inp.delta_j)?;
    let (m, sp) = (inp.big_m, inp.sigma_j_perturbed);
    let upper = inp.t + ratio(m * m, sp) + ratio(m * m * m, sp * sp);
    Ok(GeneralBound {
        sv_lower: inp.sigma_j - rj * inp.t,
        sv_upper: inp.sigma_j + rj * upper,
        subspace: Predictor::unit(subspace),
    })
}

/// `T = √ρ + δ² L / 3`; `δ = 1` gives the unrestricted-vector form.
pub fn bilinear_t(rho: f64, l: f64, delta_inf: f64) -> Result<f64> {
    check_nonneg("rho", rho)?;
    check_nonneg("L", l)?;
    check_nonneg("delta", delta_inf)?;
    Ok(rho.sqrt() + delta_inf * delta_inf * l / 3.0)
}

/// Explicit Bernstein tail `P(|xᵀEy| ≥ tT) ≤ 2 exp(−min(t², t)/2)`, capped at 1.
pub fn bernstein_tail(t: f64) -> f64 {
    (2.0 * (-(t * t).min(t) / 2.0).exp()).min(1.0)
}

/// Chebyshev tail `P(|xᵀEy| > √ρ t) ≤ t⁻²`, capped at 1.
pub fn chebyshev_tail(t: f64) -> f64 {
    ratio(1.0, t * t).min(1.0)
}

/// Net-argument tail `P(‖UᵀEV‖ > √ρ t) ≤ 49^{r+1} t⁻²`, capped at 1.
pub fn projected_tail(r: usize, t: f64) -> f64 {
    ratio(49f64.powi(r as i32 + 1), t * t).min(1.0)
}

/// All sparsification predictors for one `(A, m)`.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SparsifyPredictors {
    pub rows: usize,
    pub cols: usize,
    pub m: f64,
    pub rank: usize,
    pub sigma: Vec<f64>,
    pub delta: Vec<f64>,
    pub radius: f64,
    /// `ε_j = R/σ_j`, `j = 1..=r`.
    pub eps: Vec<f64>,
    /// `ε_1` with `log N` in place of `log(2N)`.
    pub eps1_log_n: f64,
    pub r0: Option<f64>,
    pub h: Option<HParam>,
    pub rho: f64,
    pub entry_bound: f64,
    pub bilinear_t: f64,
    pub weyl_rel: Vec<Predictor>,
    pub new_sv_rel: Vec<Predictor>,
    /// Wedin's bound with `‖E‖` replaced by its high-probability level `R`.
    pub wedin: Vec<Predictor>,
    pub new_subspace: Vec<Predictor>,
    pub norm_tail: NormTail,
    /// The two error terms of the delocalized refinement, `h ε_1` and `ε_1²`.
    #[serde(serialize_with = "ser_opt_f64")]
    pub h_eps_term: Option<f64>,
    pub eps_sq_term: f64,
}

impl SparsifyPredictors {
    /// Evaluates every predictor; `s` is the tail level of the norm bound
    /// (failure probability `e^{-s}`).
    pub fn compute<T: Real>(a: &DenseMatrix<T>, m: f64, s: f64) -> Result<Self> {
        check_tall(a.rows(), a.cols())?;
        check_budget(m)?;
        let f = svd(a, crate::matcore::default_rank_tol(a.rows(), a.cols()))?;
        let r = f.numerical_rank();
        if r == 0 {
            return Err(Error::ZeroMatrix("predictors"));
        }
        let nm = norms(a)?;
        let (l1, l2) = (nm.l1.approx_f64(), nm.l2.approx_f64());
        let big_r = radius(l2, a.rows(), m);
        let sigma: Vec<f64> = f.sigma()[..r].iter().map(|s| s.approx_f64()).collect();
        let delta = (1..=r)
            .map(|j| spectral_gap(&f, j).map(|d| d.approx_f64()))
            .collect::<Result<Vec<_>>>()?;
        let eps: Vec<f64> = sigma.iter().map(|&s| big_r / s).collect();
        let big_n = a.rows() as f64;
        let eps1_log_n = l2 * (big_n * big_n.ln() / m).sqrt() / sigma[0];
        let r0 = r0_threshold(a.rows(), m).ok();
        let h = if a.rows() >= 2 { Some(h_param(a, &f, m)?) } else { None };
        let rho = 2.0 * l2 * l2 / m;
        let entry_bound = 2.0 * l1 / m;
        let delta_inf = h.as_ref().map_or(1.0, |h| h.delta_inf);

        let mut weyl_rel = Vec::with_capacity(r);
        let mut new_sv_rel = Vec::with_capacity(r);
        let mut wedin = Vec::with_capacity(r);
        let mut new_subspace = Vec::with_capacity(r);
        for j in 1..=r {
            let (e, s, d) = (eps[j - 1], sigma[j - 1], delta[j - 1]);
            let within_r0 = r0.is_some_and(|r0| (r as f64) <= r0);
            weyl_rel.push(Predictor::raw(e));
            new_sv_rel.push(Predictor::raw((j as f64).sqrt() * e * e).with_flag("rankWithinR0", within_r0));
            wedin.push(wedin_bound(big_r, d)?);
            new_subspace.push(
                new_subspace_bound(j, r, big_r, s, d)?
                    .with_flag("noiseAboveGap", big_r > d)
                    .with_flag("noiseBelowGeometricMean", big_r < (d * s).sqrt()),
            );
        }
        Ok(SparsifyPredictors {
            rows: a.rows(),
            cols: a.cols(),
            m,
            rank: r,
            h_eps_term: h.as_ref().map(|h| h.h * eps[0]),
            eps_sq_term: eps[0] * eps[0],
            sigma,
            delta,
            radius: big_r,
            eps1_log_n,
            r0,
            h,
            rho,
            entry_bound,
            bilinear_t: bilinear_t(rho, entry_bound, delta_inf)?,
            weyl_rel,
            new_sv_rel,
            wedin,
            new_subspace,
            norm_tail: norm_tail_bound(a, m, s)?,
            eps,
        })
    }

    /// Whether the `log N` and `log(2N)` readings of `ε_1` differ by more
    /// than 1%.
    pub fn log_variants_differ(&self) -> bool {
        (self.eps1_log_n / self.eps[0] - 1.0).abs() > 0.01
    }

    pub fn to_report(&self) -> BoundReport {
        let mut rep = BoundReport::new("sparsify");
        rep.input("rows", self.rows as f64)
            .input("cols", self.cols as f64)
            .input("m", self.m)
            .input("rank", self.rank as f64);
        rep.predictor("R", Predictor::raw(self.radius));
        for (j, e) in self.eps.iter().enumerate() {
            rep.predictor(&format!("eps_{}", j + 1), Predictor::raw(*e));
        }
        rep.predictor("eps_1_logN", Predictor::raw(self.eps1_log_n));
        if let Some(r0) = self.r0 {
            rep.predictor("r0", Predictor::raw(r0));
            rep.regime("rankWithinR0", self.rank as f64 <= r0);
        }
        if let Some(h) = &self.h {
            rep.predictor(
                "h",
                Predictor::raw(h.h)
                    .with_flag("rankSmall", h.rank_small)
                    .with_flag("delocalized", h.delocalized),
            );
            rep.predictor("delta_inf", Predictor::raw(h.delta_inf));
            rep.regime("hBelowEps1", h.h < self.eps[0]);
        }
        if let Some(t) = self.h_eps_term {
            rep.predictor("hEpsTerm", Predictor::raw(t));
        }
        rep.predictor("epsSqTerm", Predictor::raw(self.eps_sq_term));
        rep.predictor("rho", Predictor::raw(self.rho));
        rep.predictor("L", Predictor::raw(self.entry_bound));
        rep.predictor("T", Predictor::raw(self.bilinear_t));
        for j in 0..self.rank {
            let k = j + 1;
            rep.predictor(&format!("weylRel_{k}"), self.weyl_rel[j].clone());
            rep.predictor(&format!("newSvRel_{k}"), self.new_sv_rel[j].clone());
            rep.predictor(&format!("wedin_{k}"), self.wedin[j].clone());
            rep.predictor(&format!("newSubspace_{k}"), self.new_subspace[j].clone());
        }
        rep.predictor("normTail", Predictor::raw(self.norm_tail.total));
        rep.predictor("normTail_spectralTerm", Predictor::raw(self.norm_tail.spectral_term));
        rep.predictor("normTail_entryTerm", Predictor::raw(self.norm_tail.entry_term));
        rep.predictor("normTail_csForm", Predictor::raw(self.norm_tail.cs_form));
        rep.input("s", self.norm_tail.s);
        if self.log_variants_differ() {
            rep.notes.push(format!(
                "eps_1 with log(2N) = {:.6e}, with log N = {:.6e} (differ by more than 1%)",
                self.eps[0], self.eps1_log_n
            ));
        }
        rep
    }
}

/// Named predictor values with their inputs and regime flags.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundReport {
    pub side: String,
    pub inputs: BTreeMap<String, f64>,
    pub predictors: BTreeMap<String, Predictor>,
    pub regime_flags: BTreeMap<String, bool>,
    pub notes: Vec<String>,
    pub shape_only: bool,
    pub tool_version: String,
}

impl BoundReport {
    pub fn new(side: &str) -> Self {
        BoundReport {
            side: side.to_string(),
            inputs: BTreeMap::new(),
            predictors: BTreeMap::new(),
            regime_flags: BTreeMap::new(),
            notes: Vec::new(),
            shape_only: true,
            tool_version: crate::TOOL_VERSION.to_string(),
        }
    }

    pub fn input(&mut self, name: &str, value: f64) -> &mut Self {
        self.inputs.insert(name.to_string(), value);
        self
    }

    pub fn predictor(&mut self, name: &str, p: Predictor) -> &mut Self {
        self.predictors.insert(name.to_string(), p);
        self
    }

    pub fn regime(&mut self, name: &str, holds: bool) -> &mut Self {
        self.regime_flags.insert(name.to_string(), holds);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Predictor> {
        self.predictors.get(name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat `name,value,capped,vacuous` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "value", "capped", "vacuous"])
            .map_err(|e| Error::invalid(e.to_string()))?;
        for (k, v) in &self.inputs {
            w.write_record([format!("input:{k}"), fmt_num(*v), String::new(), String::new()])
                .map_err(|e| Error::invalid(e.to_string()))?;
        }
        for (k, p) in &self.predictors {
            w.write_record([
                k.clone(),
                fmt_num(p.value),
                p.capped.map(fmt_num).unwrap_or_default(),
                p.vacuous.to_string(),
            ])
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub(crate) fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
