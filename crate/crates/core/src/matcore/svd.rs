//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi is slow next to bidiagonal QR but small singular values come out
//! with high relative accuracy and the factors are orthogonal to working
//! precision, which is what the trial statistics need at desk scale.

use crate::error::{Error, Result};
use crate::matcore::{DenseMatrix, Subspace};
use crate::scalar::{Real, Scalar};

pub const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(sigma) Vᵀ` with `k = min(N, n)` columns.
///
/// `sigma` is non-increasing. Each column of `U` has its largest-magnitude
/// entry (lowest row on ties) nonnegative, and the matching column of `V`
/// carries the same sign flip.
#[derive(Clone, Debug)]
pub struct SvdFactors<T> {
    u: DenseMatrix<T>,
    sigma: Vec<T>,
    v: DenseMatrix<T>,
    rank: usize,
}

impl<T: Real> SvdFactors<T> {
    pub fn u(&self) -> &DenseMatrix<T> {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix<T> {
        &self.v
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    /// Number of singular values above `rank_tol * sigma_1`.
    pub fn numerical_rank(&self) -> usize {
        self.rank
    }

    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// `sigma_j`, 1-based; zero beyond `k`.
    pub fn sigma_at(&self, j: usize) -> T {
        assert!(j >= 1, "singular values are 1-indexed");
        self.sigma.get(j - 1).copied().unwrap_or_else(T::zero)
    }

    /// Span of the first `j` left singular vectors.
    pub fn left_subspace(&self, j: usize) -> Result<Subspace<T>> {
        self.leading(&self.u, j)
    }

    /// Span of the first `j` right singular vectors.
    pub fn right_subspace(&self, j: usize) -> Result<Subspace<T>> {
        self.leading(&self.v, j)
    }

    fn leading(&self, m: &DenseMatrix<T>, j: usize) -> Result<Subspace<T>> {
        if j == 0 || j > self.k() {
            return Err(Error::invalid(format!(
                "subspace dimension {j} outside 1..={}",
                self.k()
            )));
        }
        Subspace::from_basis(DenseMatrix::from_fn(m.rows(), j, |r, c| *m.get(r, c)))
    }

    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let (rows, cols) = (self.u.rows(), self.v.rows());
        DenseMatrix::from_fn(rows, cols, |i, j| {
            (0..self.k()).fold(T::zero(), |acc, l| {
                acc + *self.u.get(i, l) * self.sigma[l] * *self.v.get(j, l)
            })
        })
    }

    /// `max_{i <= r} max(‖u_i‖_∞, ‖v_i‖_∞)`: how localized the leading
    /// singular vectors are.
    pub fn delocalization(&self, r: usize) -> T {
        let r = r.min(self.k());
        let mut d = T::zero();
        for l in 0..r {
            for i in 0..self.u.rows() {
                d = d.max(self.u.get(i, l).abs());
            }
            for i in 0..self.v.rows() {
                d = d.max(self.v.get(i, l).abs());
            }
        }
        d
    }
}

/// Default relative rank cutoff `1e-10 * max(N, n)`.
pub fn default_rank_tol<T: Real>(rows: usize, cols: usize) -> T {
    T::from_lit(1e-10) * T::from_count(rows.max(cols))
}

/// Full thin SVD. `rank_tol` is relative to `sigma_1`.
pub fn svd<T: Real>(a: &DenseMatrix<T>, rank_tol: T) -> Result<SvdFactors<T>> {
    if !(rank_tol >= T::zero()) || !rank_tol.is_finite() {
        return Err(Error::invalid("rank tolerance must be finite and nonnegative"));
    }
    let tall = a.rows() >= a.cols();
    let work = if tall { a.clone() } else { a.transpose() };
    let (cols, v) = jacobi_tall(&work, true)?;
    let v = v.expect("requested");
    let (sigma, order) = sorted_norms(&cols);

    let normalized = orthonormal_from_columns(&cols, &order, &sigma, work.rows());
    let rotations: Vec<Vec<T>> = order.iter().map(|&i| v[i].clone()).collect();
    let (mut u_cols, mut v_cols) = if tall {
        (normalized, rotations)
    } else {
        (rotations, normalized)
    };
    canonicalize_signs(&mut u_cols, &mut v_cols);

    let rank = numerical_rank(&sigma, rank_tol);
    Ok(SvdFactors {
        u: from_columns(&u_cols),
        v: from_columns(&v_cols),
        sigma,
        rank,
    })
}

/// Singular values only, non-increasing.
pub fn singular_values<T: Real>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    let work = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (cols, _) = jacobi_tall(&work, false)?;
    Ok(sorted_norms(&cols).0)
}

/// `σ_1(A) = ‖A‖`.
pub fn spectral_norm<T: Real>(a: &DenseMatrix<T>) -> Result<T> {
    Ok(singular_values(a)?[0])
}

/// First `j` left singular vectors (as an `N × j` matrix, canonical signs)
/// together with all singular values. Skips the right factor when `N >= n`.
pub fn leading_left_vectors<T: Real>(
    a: &DenseMatrix<T>,
    j: usize,
) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let k = a.rows().min(a.cols());
    if j == 0 || j > k {
        return Err(Error::invalid(format!("requested {j} vectors, k = {k}")));
    }
    if a.rows() < a.cols() {
        let f = svd(a, T::zero())?;
        let u = DenseMatrix::from_fn(a.rows(), j, |r, c| *f.u.get(r, c));
        return Ok((u, f.sigma));
    }
    let (cols, _) = jacobi_tall(a, false)?;
    let (sigma, order) = sorted_norms(&cols);
    let mut u_cols = orthonormal_from_columns(&cols, &order, &sigma, a.rows());
    let mut none: Vec<Vec<T>> = Vec::new();
    canonicalize_signs(&mut u_cols, &mut none);
    u_cols.truncate(j);
    Ok((from_columns(&u_cols), sigma))
}

fn numerical_rank<T: Real>(sigma: &[T], rank_tol: T) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > T::zero() => sigma.iter().filter(|&&s| s > rank_tol * s1).count(),
        _ => 0,
    }
}

#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Orthogonalizes the columns of a tall matrix in place. Returns the rotated
/// columns `A V` and, when asked, the accumulated rotation `V` (as columns).
fn jacobi_tall<T: Real>(
    a: &DenseMatrix<T>,
    want_v: bool,
) -> Result<(Vec<Vec<T>>, Option<Vec<Vec<T>>>)> {
    let (m, n) = a.dims();
    debug_assert!(m >= n);
    let mut w: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Option<Vec<Vec<T>>> = want_v.then(|| {
        (0..n)
            .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
            .collect()
    });
    if n == 1 {
        return Ok((w, v));
    }

    let tol = T::epsilon() * T::from_count(m);
    let mut norms: Vec<T> = w.iter().map(|c| dot(c, c)).collect();
    // columns at rounding level carry no direction; rotating them against
    // each other never settles
    let total = norms.iter().fold(T::zero(), |acc, &x| acc + x);
    let negligible = total * T::epsilon() * T::epsilon() * T::from_count(m);
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                if gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + T::one().hypot(zeta));
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = w.split_at_mut(q);
                rotate(&mut left[p], &mut right[0], c, s);
                if let Some(v) = v.as_mut() {
                    let (left, right) = v.split_at_mut(q);
                    rotate(&mut left[p], &mut right[0], c, s);
                }
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            return Ok((w, v));
        }
        // refresh the running norms so drift cannot stall convergence
        for (nrm, c) in norms.iter_mut().zip(&w) {
            *nrm = dot(c, c);
        }
    }
    Err(Error::NoConvergence { sweeps: MAX_SWEEPS })
}

#[inline]
fn rotate<T: Real>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Column norms sorted descending, with the permutation that sorts them.
fn sorted_norms<T: Real>(cols: &[Vec<T>]) -> (Vec<T>, Vec<usize>) {
    let norms: Vec<T> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    (order.iter().map(|&i| norms[i]).collect(), order)
}

/// Normalizes the Jacobi columns into left singular vectors. Columns whose
/// norm is zero to working precision are replaced by an orthonormal
/// completion so the factor always has orthonormal columns.
fn orthonormal_from_columns<T: Real>(
    cols: &[Vec<T>],
    order: &[usize],
    sigma: &[T],
    len: usize,
) -> Vec<Vec<T>> {
    let cutoff = sigma[0] * T::epsilon() * T::from_count(len.max(cols.len()));
    let mut out: Vec<Option<Vec<T>>> = order
        .iter()
        .zip(sigma)
        .map(|(&i, &s)| {
            (s > cutoff && s > T::zero()).then(|| cols[i].iter().map(|&x| x / s).collect())
        })
        .collect();

    for slot in 0..out.len() {
        if out[slot].is_some() {
            continue;
        }
        let basis: Vec<&Vec<T>> = out.iter().flatten().collect();
        let mut best: Option<(T, Vec<T>)> = None;
        for k in 0..len {
            let mut e = vec![T::zero(); len];
            e[k] = T::one();
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &e);
                    for (x, &y) in e.iter_mut().zip(b.iter()) {
                        *x = *x - c * y;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if best.as_ref().map_or(true, |(bn, _)| nrm > *bn) {
                best = Some((nrm, e));
            }
        }
        let (nrm, e) = best.expect("len > 0");
        out[slot] = Some(e.into_iter().map(|x| x / nrm).collect());
    }
    out.into_iter().map(|c| c.expect("filled")).collect()
}

fn canonicalize_signs<T: Real>(u: &mut [Vec<T>], v: &mut [Vec<T>]) {
    for (l, col) in u.iter_mut().enumerate() {
        let mut pivot = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < T::zero() {
            col.iter_mut().for_each(|x| *x = -*x);
            if let Some(vc) = v.get_mut(l) {
                vc.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
}

fn from_columns<T: Scalar>(cols: &[Vec<T>]) -> DenseMatrix<T> {
    DenseMatrix::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i].clone())
}
