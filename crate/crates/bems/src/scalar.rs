//! Floating-point scalar abstraction for the numeric core.
//!
//! Model assembly, discretization, prediction stacking, robustification and
//! the LP solver are all written against [`Scalar`] so they run in `f32` or
//! `f64`. The I/O layers (config, market data, simulation harness) work with
//! the concrete `f64` aliases exported from the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants and tolerances.
    fn from_f64(v: f64) -> Self;

    /// Lossy conversion to `f64`, used at reporting boundaries.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
