//! Dense matrices, norms, SVD, principal angles and test-matrix generation.

mod generate;
mod matrix;
mod norms;
mod subspace;
pub mod svd;

pub use generate::{gaussian_matrix, haar_orthonormal, make_low_rank};
pub use matrix::DenseMatrix;
pub use norms::{norms, NormSummary};
pub use subspace::{sin_angle, Subspace};
pub use svd::{default_rank_tol, leading_left_vectors, singular_values, spectral_norm, svd, SvdFactors};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `δ_j = σ_j − σ_{j+1}` for `1 <= j <= rank`, with `σ_{rank+1}` taken as 0.
pub fn spectral_gap<T: Real>(f: &SvdFactors<T>, j: usize) -> Result<T> {
    let r = f.numerical_rank();
    if j == 0 || j > r {
        return Err(Error::invalid(format!(
            "spectral gap index {j} outside 1..={r}"
        )));
    }
    let next = if j == r { T::zero() } else { f.sigma_at(j + 1) };
    Ok(f.sigma_at(j) - next)
}
