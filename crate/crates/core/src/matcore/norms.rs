use serde::Serialize;

use crate::error::Result;
use crate::matcore::{spectral_norm, DenseMatrix};
use crate::scalar::Real;

/// Entrywise and spectral norms of a matrix plus its Cauchy–Schwarz constant
/// `cs(A) = ‖A‖_1 / (√(N n) ‖A‖_2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormSummary<T> {
    pub l1: T,
    pub l2: T,
    pub max: T,
    pub spectral: T,
    /// Zero for the zero matrix.
    pub cs: T,
}

pub fn norms<T: Real>(a: &DenseMatrix<T>) -> Result<NormSummary<T>> {
    let l1 = a.abs_sum();
    let l2 = a.frobenius();
    let max = a.max_abs();
    let spectral = spectral_norm(a)?;
    let cs = if l2 > T::zero() {
        let size = T::from_count(a.rows()) * T::from_count(a.cols());
        (l1 / (size.sqrt() * l2)).min(T::one())
    } else {
        T::zero()
    };
    Ok(NormSummary {
        l1,
        l2,
        max,
        spectral,
        cs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;
    use proptest::prelude::*;

    #[test]
    fn all_ones() {
        let n = norms(&Matrix::from_fn(4, 4, |_, _| 1.0)).unwrap();
        assert_eq!((n.l1, n.l2, n.max), (16.0, 4.0, 1.0));
        assert!((n.spectral - 4.0).abs() < 1e-14);
        assert!((n.cs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diag_3_4() {
        let n = norms(&Matrix::from_diag(&[3.0, 4.0])).unwrap();
        assert_eq!((n.l1, n.l2, n.max, n.spectral), (7.0, 5.0, 4.0, 4.0));
        assert!((n.cs - 0.7).abs() < 1e-15);
    }

    #[test]
    fn single_nonzero_entry() {
        let mut a = Matrix::zeros(5, 3);
        a.set(2, 1, -7.5);
        let n = norms(&a).unwrap();
        assert!((n.cs - 1.0 / 15f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_cs_is_zero() {
        let n = norms(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(n.cs, 0.0);
        assert_eq!(n.spectral, 0.0);
    }

    proptest! {
        #[test]
        fn norm_ordering(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
            let a: Matrix = crate::matcore::gaussian_matrix(rows, cols, seed);
            let n = norms(&a).unwrap();
            prop_assert!(n.spectral <= n.l2 * (1.0 + 1e-12));
            prop_assert!(n.l2 <= n.l1 * (1.0 + 1e-12));
            prop_assert!(n.max <= n.l1);
            prop_assert!((0.0..=1.0).contains(&n.cs));
        }
    }
}
