use crate::error::{Error, Result};
use crate::matcore::{singular_values, DenseMatrix};
use crate::scalar::Real;

/// A linear subspace held through an orthonormal basis (columns).
#[derive(Clone, Debug)]
pub struct Subspace<T> {
    basis: DenseMatrix<T>,
}

fn orthonormal_tol<T: Real>() -> T {
    T::from_lit(1e-10).max(T::from_lit(1e3) * T::epsilon())
}

impl<T: Real> Subspace<T> {
    /// Wraps a basis whose columns must already be orthonormal.
    pub fn from_basis(basis: DenseMatrix<T>) -> Result<Self> {
        if basis.cols() > basis.rows() {
            return Err(Error::invalid(format!(
                "{} basis vectors in ambient dimension {}",
                basis.cols(),
                basis.rows()
            )));
        }
        let gram = basis.transpose().matmul(&basis)?;
        let err = gram.max_abs_diff(&DenseMatrix::identity(basis.cols()))?;
        if err > orthonormal_tol() {
            return Err(Error::invalid(format!(
                "basis is not orthonormal (Gram error {err:e})"
            )));
        }
        Ok(Subspace { basis })
    }

    /// Span of arbitrary linearly independent columns (orthonormalized by
    /// Gram–Schmidt with one reorthogonalization pass).
    pub fn span(vectors: &DenseMatrix<T>) -> Result<Self> {
        let (n, d) = vectors.dims();
        let mut q: Vec<Vec<T>> = Vec::with_capacity(d);
        for j in 0..d {
            let mut v = vectors.column(j);
            let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
            for _ in 0..2 {
                for b in &q {
                    let c = b.iter().zip(&v).fold(T::zero(), |s, (&x, &y)| s + x * y);
                    v.iter_mut().zip(b).for_each(|(x, &y)| *x = *x - c * y);
                }
            }
            let nrm = v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
            if !(nrm > scale * T::epsilon() * T::from_count(n) * T::from_lit(16.0)) {
                return Err(Error::invalid(format!(
                    "column {j} is linearly dependent on the previous ones"
                )));
            }
            q.push(v.into_iter().map(|x| x / nrm).collect());
        }
        Self::from_basis(DenseMatrix::from_fn(n, d, |i, j| q[j][i]))
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn basis(&self) -> &DenseMatrix<T> {
        &self.basis
    }

    /// Same subspace expressed in the basis `B Q` for an orthogonal `d × d` Q.
    pub fn rotated(&self, q: &DenseMatrix<T>) -> Result<Self> {
        Self::from_basis(self.basis.matmul(q)?)
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projector(&self) -> DenseMatrix<T> {
        self.basis
            .matmul(&self.basis.transpose())
            .expect("shapes agree")
    }

    /// `P_U x` for a matrix of column vectors `x`.
    pub fn project(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.basis.matmul(&self.basis.transpose().matmul(x)?)
    }
}

/// `sin∠(U, W) = ‖P_U − P_W‖ = ‖P_{U⊥} P_W‖`, evaluated as the largest
/// singular value of `(I − B_U B_Uᵀ) B_W` and clamped to `[0, 1]`.
pub fn sin_angle<T: Real>(u: &Subspace<T>, w: &Subspace<T>) -> Result<T> {
    if u.dim() != w.dim() || u.ambient_dim() != w.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "principal angle needs equal dimensions: {}-dim in R^{} vs {}-dim in R^{}",
            u.dim(),
            u.ambient_dim(),
            w.dim(),
            w.ambient_dim()
        )));
    }
    let residual = w.basis().sub(&u.project(w.basis())?)?;
    let s = singular_values(&residual)?[0];
    Ok(s.max(T::zero()).min(T::one()))
}
