//! Scalar abstraction for the numeric kernels.
//!
//! The low-level numeric routines (linear algebra, activations, the
//! optimizer, assignment) are generic over [`Scalar`] so they can run in
//! either `f32` or `f64`. The full pipeline instantiates everything at
//! [`crate::Real`] (`f64`).

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by every numeric kernel in this crate.
///
/// This is a convenience umbrella over the `num-traits` hierarchy: anything
/// that is a [`Float`] with assignment operators and lossless-enough
/// conversions from primitive ints/floats qualifies. Blanket-implemented for
/// `f32` and `f64`.
pub trait Scalar: Float + FromPrimitive + NumAssign + std::fmt::Debug + std::fmt::Display + 'static {
    /// Converts from `f64`, panicking on failure (cannot happen for the
    /// two standard float types).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// Converts from `usize`, panicking on overflow. Counts in this crate
    /// are small (thousands at most), so overflow indicates a logic bug.
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize conversion")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + NumAssign + std::fmt::Debug + std::fmt::Display + 'static
{
}
