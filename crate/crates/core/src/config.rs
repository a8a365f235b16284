//! Numerical tolerances and fixed-point settings shared across modules.

use crate::error::{Error, Result};

/// Thresholds used by the matrix predicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative asymmetry accepted for a Hermitian matrix.
    pub hermitian: f64,
    /// Relative margin for half-plane membership.
    pub half_plane: f64,
    /// Largest accepted 1-norm condition estimate before inversion fails.
    pub max_condition: f64,
    /// Relative off-diagonal magnitude accepted for a diagonal matrix.
    pub diagonal: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances =
        Tolerances { hermitian: 1e-12, half_plane: 1e-14, max_condition: 1e14, diagonal: 1e-12 };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Stopping rule and damping for the subordination iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial (and maximal) damping factor; halved automatically on oscillation.
    pub damping: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { tolerance: 1e-12, max_iterations: 10_000, damping: 1.0 }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        Ok(())
    }
}
