//! Asymptotic spectra and isotropic mutual information of operator-valued
//! Kronecker channel models.
//!
//! The channel H = R·X·T is symmetrized into Ĥ = Q·X̂, whose matrix-valued
//! Cauchy transform follows from closed forms for Q and for each circular
//! block of X̂, combined by subordination. Stieltjes inversion of the
//! resulting scalar transform gives the eigenvalue density of HH*.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod matrix;
pub mod mc;
pub mod opval;
pub mod pipeline;
pub mod scalar;
pub mod subordination;

pub use config::{FixedPointConfig, Tolerances};
pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, DiagonalMatrix, Operand, C64};
pub use scalar::{DensityEstimate, ScalarMeasure};
