use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::rng::{self, TrialRng};
use crate::scalar::Real;

/// Matrix of i.i.d. standard normal entries, deterministic per seed.
pub fn gaussian_matrix<T: Real>(rows: usize, cols: usize, seed: u64) -> DenseMatrix<T> {
    let mut g = rng::from_seed(seed);
    gaussian_from(&mut g, rows, cols)
}

fn gaussian_from<T: Real>(g: &mut TrialRng, rows: usize, cols: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(rows, cols, |_, _| T::from_lit(rng::standard_normal(g)))
}

/// Haar-distributed `rows × k` matrix with orthonormal columns: Gram–Schmidt
/// on a Gaussian matrix, keeping the triangular factor's diagonal positive.
pub fn haar_orthonormal<T: Real>(rows: usize, k: usize, seed: u64) -> DenseMatrix<T> {
    let mut g = rng::from_seed(seed);
    haar_from(&mut g, rows, k)
}

fn haar_from<T: Real>(g: &mut TrialRng, rows: usize, k: usize) -> DenseMatrix<T> {
    assert!(k <= rows, "cannot fit {k} orthonormal columns in R^{rows}");
    let gauss: DenseMatrix<T> = gaussian_from(g, rows, k);
    let mut q: Vec<Vec<T>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = gauss.column(j);
        for _ in 0..2 {
            for b in &q {
                let c = b.iter().zip(&v).fold(T::zero(), |s, (&x, &y)| s + x * y);
                v.iter_mut().zip(b).for_each(|(x, &y)| *x = *x - c * y);
            }
        }
        let nrm = v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
        q.push(v.into_iter().map(|x| x / nrm).collect());
    }
    DenseMatrix::from_fn(rows, k, |i, j| q[j][i])
}

/// `A = U diag(spectrum) Vᵀ` with independent Haar `U` (`N × k`) and `V`
/// (`n × k`). Bit-identical for equal seeds.
pub fn make_low_rank<T: Real>(
    rows: usize,
    cols: usize,
    spectrum: &[T],
    seed: u64,
) -> Result<DenseMatrix<T>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    if spectrum.is_empty() || spectrum.len() > rows.min(cols) {
        return Err(Error::invalid(format!(
            "spectrum length {} must be in 1..={}",
            spectrum.len(),
            rows.min(cols)
        )));
    }
    if spectrum.iter().any(|s| !(s.is_finite() && *s > T::zero())) {
        return Err(Error::invalid("spectrum entries must be positive and finite"));
    }
    if spectrum.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("spectrum must be non-increasing"));
    }
    let k = spectrum.len();
    let mut g = rng::from_seed(seed);
    let u: DenseMatrix<T> = haar_from(&mut g, rows, k);
    let v: DenseMatrix<T> = haar_from(&mut g, cols, k);
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| {
        (0..k).fold(T::zero(), |acc, l| acc + *u.get(i, l) * spectrum[l] * *v.get(j, l))
    }))
}
