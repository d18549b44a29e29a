//! Randomized matrix sparsification and low-rank matrix completion, together
//! with the perturbation predictors that describe how far the spectrum and the
//! leading singular subspaces move under a *random* perturbation, and a
//! Monte-Carlo harness that measures the real errors against those predictors.
//!
//! The numerical core is generic over the scalar type: every routine that needs
//! square roots or an SVD works for any [`Real`] (`f32`, `f64`), and the
//! sqrt-free pieces (sampling probabilities, feasibility limits, entry bounds,
//! the completion noise decomposition) also accept exact rationals
//! ([`ExactMatrix`]). The aliases below fix the scalar to `f64` for everyday use.

pub mod bounds;
pub mod completion;
pub mod error;
pub mod io;
pub mod matcore;
pub mod mcverify;
pub mod rng;
pub mod scalar;
pub mod sparsify;

pub use error::{Error, Result};
pub use matcore::{DenseMatrix, NormSummary, Subspace, SvdFactors};
pub use scalar::{Real, Scalar};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type Matrix = DenseMatrix<f64>;
pub type MatrixF32 = DenseMatrix<f32>;
pub type ExactMatrix = DenseMatrix<Rational>;
pub type Svd = SvdFactors<f64>;
pub type Norms = NormSummary<f64>;
pub type SampleDistribution = sparsify::SampleDistribution<f64>;
pub type SparsifyOutcome = sparsify::SparsifyOutcome<f64>;
pub type ObservationSet = completion::ObservationSet<f64>;

/// Version string embedded in every file the crate writes.
pub const TOOL_VERSION: &str = concat!("randpert ", env!("CARGO_PKG_VERSION"));
