//! Element-wise randomized sparsification.
//!
//! Both samplers draw from the hybrid distribution
//! `p_ij = ½ (a_ij² / ‖A‖_2² + |a_ij| / ‖A‖_1)`:
//!
//! * [`sparsify_replacement`] draws `m` positions i.i.d. and averages the
//!   one-entry matrices `a_ij / p_ij · e_i e_jᵀ`;
//! * [`sparsify_bernoulli`] keeps each entry independently with probability
//!   `p̃_ij = m p_ij`, rescaled to `a_ij / p̃_ij`.
//!
//! Both outputs are unbiased for `A`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::rng;
use crate::scalar::{Real, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Replacement,
    #[default]
    Bernoulli,
}

/// What to do when some `m p_ij` exceeds 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampPolicy {
    /// Refuse with [`Error::Infeasible`].
    #[default]
    Strict,
    /// Cap the keep-probability at 1; such entries are kept verbatim.
    Clamp,
}

/// Entry-sampling probabilities; they sum to one and vanish exactly on the
/// zero entries of the source matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDistribution<T> {
    rows: usize,
    cols: usize,
    probs: Vec<T>,
}

impl<T: Scalar> SampleDistribution<T> {
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.probs[i * self.cols + j]
    }

    /// Row-major probabilities.
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn total(&self) -> T {
        self.probs.iter().fold(T::zero(), |s, p| s + p.clone())
    }
}

/// Hybrid ℓ2/ℓ1 sampling distribution. Sqrt-free, so exact over rationals.
pub fn sample_probs<T: Scalar>(a: &DenseMatrix<T>) -> Result<SampleDistribution<T>> {
    let l2sq = a.sum_squares();
    let l1 = a.abs_sum();
    if l1.is_zero() {
        return Err(Error::ZeroMatrix("sampling distribution"));
    }
    let half = T::one() / (T::one() + T::one());
    let probs = a
        .as_slice()
        .iter()
        .map(|x| half.clone() * (x.clone() * x.clone() / l2sq.clone() + x.abs() / l1.clone()))
        .collect();
    Ok(SampleDistribution {
        rows: a.rows(),
        cols: a.cols(),
        probs,
    })
}

/// Largest budget keeping every `m p_ij <= 1`:
/// `min(‖A‖_2² / ‖A‖_max², ‖A‖_1 / ‖A‖_max)`.
pub fn feasible_m_max<T: Scalar>(a: &DenseMatrix<T>) -> Result<T> {
    let max = a.max_abs();
    if max.is_zero() {
        return Err(Error::ZeroMatrix("feasible budget"));
    }
    let by_l2 = a.sum_squares() / (max.clone() * max.clone());
    let by_l1 = a.abs_sum() / max;
    Ok(if by_l2 < by_l1 { by_l2 } else { by_l1 })
}

/// Entry variance and magnitude bounds of `E = S̃(A) − A`:
/// `ρ = (2/m) ‖A‖_2²` and `L = (2/m) ‖A‖_1`.
pub fn entry_variance_bounds<T: Scalar>(a: &DenseMatrix<T>, m: T) -> Result<(T, T)> {
    if !(m > T::zero()) {
        return Err(Error::invalid("sampling budget must be positive"));
    }
    let two = T::one() + T::one();
    let rho = two.clone() * a.sum_squares() / m.clone();
    let l = two * a.abs_sum() / m;
    Ok((rho, l))
}

/// One sampled sparsifier together with its error `E = result − A`.
#[derive(Clone, Debug)]
pub struct SparsifyOutcome<T> {
    pub result: DenseMatrix<T>,
    pub error: DenseMatrix<T>,
    pub nnz: usize,
    /// Draw count per selected position (replacement sampler only).
    pub multiplicities: Option<Vec<(usize, usize, u64)>>,
    pub method: Method,
    pub m: f64,
    pub seed: u64,
    /// Entries whose keep-probability was capped at 1 under [`ClampPolicy::Clamp`].
    pub clamped: usize,
}

/// Metadata written next to a sparsified matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SparsifySidecar {
    pub method: Method,
    pub m: f64,
    pub seed: u64,
    pub nnz: usize,
    pub clamp_warnings: usize,
    pub rows: usize,
    pub cols: usize,
    pub tool_version: String,
}

impl<T: Scalar> SparsifyOutcome<T> {
    pub fn sidecar(&self) -> SparsifySidecar {
        SparsifySidecar {
            method: self.method,
            m: self.m,
            seed: self.seed,
            nnz: self.nnz,
            clamp_warnings: self.clamped,
            rows: self.result.rows(),
            cols: self.result.cols(),
            tool_version: crate::TOOL_VERSION.to_string(),
        }
    }
}

/// With-replacement sampler with the cumulative table precomputed, for
/// drawing many outcomes from one matrix.
#[derive(Clone, Debug)]
pub struct ReplacementSampler<T> {
    a: DenseMatrix<T>,
    dist: SampleDistribution<T>,
    cumulative: Vec<f64>,
}

impl<T: Real> ReplacementSampler<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        let dist = sample_probs(a)?;
        let mut acc = 0.0;
        let cumulative = dist
            .probs()
            .iter()
            .map(|p| {
                acc += p.approx_f64();
                acc
            })
            .collect();
        Ok(ReplacementSampler {
            a: a.clone(),
            dist,
            cumulative,
        })
    }

    pub fn distribution(&self) -> &SampleDistribution<T> {
        &self.dist
    }

    /// Inverse-CDF lookup of a flattened index for `u ∈ [0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let target = u * total;
        let k = self.cumulative.partition_point(|&c| c <= target);
        k.min(self.cumulative.len() - 1)
    }

    pub fn sample(&self, m: usize, seed: u64) -> Result<SparsifyOutcome<T>> {
        if m == 0 {
            return Err(Error::invalid("replacement sampler needs m >= 1"));
        }
        let mut g = rng::from_seed(seed);
        let mut counts = vec![0u64; self.a.len()];
        for _ in 0..m {
            counts[self.index_for(rng::uniform(&mut g))] += 1;
        }
        let cols = self.a.cols();
        let m_t = T::from_count(m);
        let mut result = DenseMatrix::zeros(self.a.rows(), cols);
        let mut multiplicities = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (i, j) = (k / cols, k % cols);
            let value = T::from_lit(c as f64) / m_t * (*self.a.get(i, j) / *self.dist.get(i, j));
            result.set(i, j, value);
            multiplicities.push((i, j, c));
        }
        let error = result.sub(&self.a)?;
        Ok(SparsifyOutcome {
            nnz: multiplicities.len(),
            result,
            error,
            multiplicities: Some(multiplicities),
            method: Method::Replacement,
            m: m as f64,
            seed,
            clamped: 0,
        })
    }
}

/// Independent-entry sampler with keep-probabilities `min(m p_ij, 1)`
/// precomputed.
#[derive(Clone, Debug)]
pub struct BernoulliSampler<T> {
    a: DenseMatrix<T>,
    keep: Vec<T>,
    m: f64,
    clamped: usize,
    entry_bound: T,
}

/// Allowance for rounding in `m p_ij` when `m` sits exactly at the
/// feasibility limit.
const FEASIBILITY_SLACK: f64 = 1e-12;

impl<T: Real> BernoulliSampler<T> {
    pub fn new(a: &DenseMatrix<T>, m: f64, policy: ClampPolicy) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::invalid("sampling budget must be positive and finite"));
        }
        let dist = sample_probs(a)?;
        let m_t = T::from_lit(m);
        let mut keep: Vec<T> = dist.probs().iter().map(|&p| m_t * p).collect();

        let (worst, worst_p) = keep
            .iter()
            .enumerate()
            .fold((0, T::zero()), |(k, best), (i, &p)| {
                if p > best {
                    (i, p)
                } else {
                    (k, best)
                }
            });
        let one = T::one();
        let limit = one + T::from_lit(FEASIBILITY_SLACK);
        // strict mode enforces m <= m_max itself, which is tighter than max m p_ij <= 1
        let m_max = feasible_m_max(a)?.approx_f64();
        if policy == ClampPolicy::Strict && (worst_p > limit || m > m_max * (1.0 + FEASIBILITY_SLACK)) {
            return Err(Error::Infeasible {
                m,
                row: worst / a.cols(),
                col: worst % a.cols(),
                prob: worst_p.approx_f64(),
            });
        }
        let mut clamped = 0;
        for p in &mut keep {
            if *p > one {
                if *p > limit {
                    clamped += 1;
                }
                *p = one;
            }
        }
        let (_, entry_bound) = entry_variance_bounds(a, m_t)?;
        Ok(BernoulliSampler {
            a: a.clone(),
            keep,
            m,
            clamped,
            entry_bound,
        })
    }

    /// Keep-probabilities `p̃_ij` (row-major, capped at 1).
    pub fn keep_probs(&self) -> &[T] {
        &self.keep
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `L = (2/m) ‖A‖_1`, the deterministic bound on every `|E_ij|`.
    pub fn entry_bound(&self) -> T {
        self.entry_bound
    }

    pub fn sample(&self, seed: u64) -> Result<SparsifyOutcome<T>> {
        let mut g = rng::from_seed(seed);
        let cols = self.a.cols();
        let mut result = DenseMatrix::zeros(self.a.rows(), cols);
        let mut nnz = 0;
        for (k, (&a, &p)) in self.a.as_slice().iter().zip(&self.keep).enumerate() {
            // one uniform per entry keeps the stream layout independent of A
            let u = rng::uniform(&mut g);
            if p > T::zero() && T::from_lit(u) < p {
                result.set(k / cols, k % cols, a / p);
                nnz += 1;
            }
        }
        let error = result.sub(&self.a)?;
        self.check_entry_bound(&error)?;
        Ok(SparsifyOutcome {
            result,
            error,
            nnz,
            multiplicities: None,
            method: Method::Bernoulli,
            m: self.m,
            seed,
            clamped: self.clamped,
        })
    }

    fn check_entry_bound(&self, error: &DenseMatrix<T>) -> Result<()> {
        let allowed = self.entry_bound * (T::one() + T::from_lit(16.0) * T::epsilon());
        if let Some((i, j, e)) = error.entries().find(|(_, _, e)| e.abs() > allowed) {
            return Err(Error::InvariantViolation(format!(
                "|E[{i},{j}]| = {} exceeds (2/m)‖A‖_1 = {}",
                e.abs(),
                self.entry_bound
            )));
        }
        Ok(())
    }
}

/// Draws `S(A)` with `m` i.i.d. position samples.
pub fn sparsify_replacement<T: Real>(
    a: &DenseMatrix<T>,
    m: usize,
    seed: u64,
) -> Result<SparsifyOutcome<T>> {
    ReplacementSampler::new(a)?.sample(m, seed)
}

/// Draws `S̃(A)` keeping entries independently with probability `m p_ij`.
pub fn sparsify_bernoulli<T: Real>(
    a: &DenseMatrix<T>,
    m: f64,
    seed: u64,
    policy: ClampPolicy,
) -> Result<SparsifyOutcome<T>> {
    BernoulliSampler::new(a, m, policy)?.sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::make_low_rank;
    use crate::{ExactMatrix, Matrix, Rational};
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn diag34() -> Matrix {
        Matrix::from_diag(&[3.0, 4.0])
    }

    #[test]
    fn probs_all_ones_uniform() {
        let d = sample_probs(&Matrix::from_fn(4, 4, |_, _| 1.0)).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-17));
    }

    #[test]
    fn probs_diag_exact() {
        let a = ExactMatrix::from_diag(&[q(3, 1), q(4, 1)]);
        let d = sample_probs(&a).unwrap();
        assert_eq!(*d.get(0, 0), q(69, 175));
        assert_eq!(*d.get(1, 1), q(106, 175));
        assert_eq!(*d.get(0, 1), q(0, 1));
        assert_eq!(d.total(), q(1, 1));

        let f = sample_probs(&diag34()).unwrap();
        assert!((f.get(0, 0) - 69.0 / 175.0).abs() < 1e-15);
    }

    #[test]
    fn probs_of_zero_matrix_fail() {
        assert!(matches!(
            sample_probs(&Matrix::zeros(2, 2)),
            Err(Error::ZeroMatrix(_))
        ));
        assert!(feasible_m_max(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn feasible_budget() {
        let a = ExactMatrix::from_diag(&[q(3, 1), q(4, 1)]);
        assert_eq!(feasible_m_max(&a).unwrap(), q(25, 16));
        let ones = ExactMatrix::from_fn(3, 5, |_, _| q(1, 1));
        assert_eq!(feasible_m_max(&ones).unwrap(), q(15, 1));
    }

    #[test]
    fn variance_bounds() {
        let a = ExactMatrix::from_diag(&[q(3, 1), q(4, 1)]);
        assert_eq!(entry_variance_bounds(&a, q(1, 1)).unwrap(), (q(50, 1), q(14, 1)));
        let ones = ExactMatrix::from_fn(4, 4, |_, _| q(1, 1));
        assert_eq!(entry_variance_bounds(&ones, q(16, 1)).unwrap(), (q(2, 1), q(2, 1)));
        assert_eq!(entry_variance_bounds(&ones, q(32, 1)).unwrap(), (q(1, 1), q(1, 1)));
        assert!(entry_variance_bounds(&ones, q(0, 1)).is_err());
    }

    #[test]
    fn replacement_one_by_one() {
        let a = Matrix::from_row_major(1, 1, vec![-2.5]).unwrap();
        let out = sparsify_replacement(&a, 1, 5).unwrap();
        assert_eq!(*out.result.get(0, 0), -2.5);
        assert_eq!(out.nnz, 1);
        assert_eq!(out.multiplicities.unwrap(), vec![(0, 0, 1)]);
    }

    /// Exhaustive expectation for diag(3,4), m = 1: two outcomes weighted by
    /// their probabilities average back to A.
    #[test]
    fn replacement_expectation_by_enumeration() {
        let a = ExactMatrix::from_diag(&[q(3, 1), q(4, 1)]);
        let d = sample_probs(&a).unwrap();
        let mut mean = ExactMatrix::zeros(2, 2);
        for k in [0usize, 3] {
            let (i, j) = (k / 2, k % 2);
            let p = d.get(i, j).clone();
            let mut outcome = ExactMatrix::zeros(2, 2);
            outcome.set(i, j, a.get(i, j).clone() / p.clone());
            mean = mean.add(&outcome.scale(&p)).unwrap();
        }
        assert_eq!(mean, a);
    }

    #[test]
    fn replacement_multiplicities_sum_to_m() {
        let a: Matrix = make_low_rank(6, 5, &[3.0, 1.0], 2).unwrap();
        let out = sparsify_replacement(&a, 40, 9).unwrap();
        let total: u64 = out.multiplicities.as_ref().unwrap().iter().map(|t| t.2).sum();
        assert_eq!(total, 40);
        assert!(out.nnz <= 40);
        let d = sample_probs(&a).unwrap();
        for &(i, j, c) in out.multiplicities.as_ref().unwrap() {
            let expect = c as f64 / 40.0 * a.get(i, j) / d.get(i, j);
            assert!((out.result.get(i, j) - expect).abs() <= 1e-12 * expect.abs());
        }
    }

    #[test]
    fn inverse_cdf_skips_zero_probability() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = ReplacementSampler::new(&a).unwrap();
        assert_eq!(s.index_for(0.0), 0);
        assert_eq!(s.index_for(0.4999), 0);
        assert_eq!(s.index_for(0.5), 3);
        assert_eq!(s.index_for(0.999_999_999), 3);
    }

    #[test]
    fn bernoulli_keeps_everything_at_full_budget() {
        let j = Matrix::from_fn(4, 4, |_, _| 1.0);
        let out = sparsify_bernoulli(&j, 16.0, 3, ClampPolicy::Strict).unwrap();
        assert_eq!(out.result, j);
        assert!(out.error.is_zero_matrix());
        assert_eq!(out.nnz, 16);
        assert_eq!(out.clamped, 0);
    }

    #[test]
    fn bernoulli_strict_rejects_infeasible_budget() {
        let err = sparsify_bernoulli(&diag34(), 2.0, 0, ClampPolicy::Strict).unwrap_err();
        match err {
            Error::Infeasible { row, col, prob, .. } => {
                assert_eq!((row, col), (1, 1));
                assert!((prob - 2.0 * 106.0 / 175.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        // at the limit itself the budget is accepted
        assert!(sparsify_bernoulli(&diag34(), 1.5625, 0, ClampPolicy::Strict).is_ok());
        // every m p_ij < 1 at m = 1.6, but m is above the limit
        assert!(matches!(
            sparsify_bernoulli(&diag34(), 1.6, 0, ClampPolicy::Strict),
            Err(Error::Infeasible { row: 1, col: 1, .. })
        ));
        let ok = sparsify_bernoulli(&diag34(), 1.6, 0, ClampPolicy::Clamp).unwrap();
        assert_eq!(ok.clamped, 0);
    }

    #[test]
    fn bernoulli_clamp_keeps_capped_entries() {
        let out = sparsify_bernoulli(&diag34(), 2.0, 0, ClampPolicy::Clamp).unwrap();
        assert_eq!(out.clamped, 1);
        assert_eq!(*out.result.get(1, 1), 4.0);
    }

    #[test]
    fn rejects_bad_budgets() {
        assert!(sparsify_bernoulli(&diag34(), 0.0, 0, ClampPolicy::Clamp).is_err());
        assert!(sparsify_bernoulli(&diag34(), f64::NAN, 0, ClampPolicy::Clamp).is_err());
        assert!(sparsify_replacement(&diag34(), 0, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Matrix = make_low_rank(7, 5, &[2.0, 1.0], 4).unwrap();
        let m = feasible_m_max(&a).unwrap() * 0.8;
        let x = sparsify_bernoulli(&a, m, 99, ClampPolicy::Strict).unwrap();
        let y = sparsify_bernoulli(&a, m, 99, ClampPolicy::Strict).unwrap();
        assert_eq!(x.result, y.result);
        let r1 = sparsify_replacement(&a, 50, 99).unwrap();
        let r2 = sparsify_replacement(&a, 50, 99).unwrap();
        assert_eq!(r1.result, r2.result);
    }

    proptest! {
        #[test]
        fn distribution_invariants(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, scale in 0.01f64..100.0) {
            let mut a: Matrix = crate::matcore::gaussian_matrix(rows, cols, seed);
            a.set(0, 0, 0.0);
            if a.is_zero_matrix() { a.set(rows - 1, cols - 1, 1.0); }
            let d = sample_probs(&a).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= 1e-12);
            for (i, j, x) in a.entries() {
                let p = *d.get(i, j);
                prop_assert_eq!(*x == 0.0, p == 0.0);
            }
            let d2 = sample_probs(&a.scale(&scale)).unwrap();
            for (p, p2) in d.probs().iter().zip(d2.probs()) {
                prop_assert!((p - p2).abs() <= 1e-14);
            }
            let f = feasible_m_max(&a).unwrap();
            prop_assert!((f - feasible_m_max(&a.scale(&scale)).unwrap()).abs() <= 1e-9 * f);
        }

        #[test]
        fn pathwise_entry_bound(seed in any::<u64>(), frac in 0.05f64..1.0) {
            let a: Matrix = crate::matcore::gaussian_matrix(5, 4, seed);
            let m = feasible_m_max(&a).unwrap() * frac;
            let out = sparsify_bernoulli(&a, m, seed, ClampPolicy::Strict).unwrap();
            let bound = 2.0 / m * a.abs_sum();
            prop_assert!(out.error.max_abs() <= bound * (1.0 + 1e-14));
            for (i, j, r) in out.result.entries() {
                let keep = m * sample_probs(&a).unwrap().get(i, j);
                prop_assert!(*r == 0.0 || (r - a.get(i, j) / keep).abs() <= 1e-12 * r.abs());
            }
        }
    }
}
