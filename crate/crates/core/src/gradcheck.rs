//! Finite-difference gradient verification.
//!
//! Every backward pass in this crate is hand-derived, so this module
//! provides the independent oracle: central differences over a flat
//! parameter vector, compared coordinate-by-coordinate against the
//! analytic gradient. It deliberately shares no code with the reverse-mode
//! implementations it checks.

use crate::scalar::Scalar;

/// Default probe step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Default relative-error tolerance for a coordinate to count as passing.
pub const DEFAULT_REL_TOL: f64 = 1e-4;
/// Absolute floor below which a discrepancy always passes (both values
/// indistinguishable from zero at probe precision).
pub const DEFAULT_ABS_FLOOR: f64 = 1e-9;

/// Central-difference estimate of `∂f/∂x[i]` for each index in `indices`.
///
/// `f` is re-evaluated with `x[i]` displaced by `±step`; `x` is restored
/// bit-exactly after each probe.
pub fn finite_difference<T, F>(x: &mut [T], indices: &[usize], step: T, mut f: F) -> Vec<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let mut grads = Vec::with_capacity(indices.len());
    for &i in indices {
        let saved = x[i];
        x[i] = saved + step;
        let plus = f(x);
        x[i] = saved - step;
        let minus = f(x);
        x[i] = saved;
        grads.push((plus - minus) / (step + step));
    }
    grads
}

/// Outcome of comparing an analytic gradient against a finite-difference
/// estimate over some set of coordinates.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    /// Largest relative error seen over all checked coordinates.
    pub max_rel_err: f64,
    /// Index (into the checked set) of the worst coordinate.
    pub worst: usize,
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.checked
    }
}

/// Compares paired gradient estimates. Coordinate `i` passes when
/// `|a − b| < rel_tol · max(|a|, |b|)` or `|a − b| < abs_floor`.
pub fn compare<T: Scalar>(
    analytic: &[T],
    numeric: &[T],
    rel_tol: f64,
    abs_floor: f64,
) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "compare: length mismatch");
    let mut passed = 0;
    let mut max_rel_err = 0.0f64;
    let mut worst = 0;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let a = a.to_f64().unwrap();
        let n = n.to_f64().unwrap();
        let diff = (a - n).abs();
        let scale = a.abs().max(n.abs());
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        if diff < rel_tol * scale || diff < abs_floor {
            passed += 1;
        }
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = i;
        }
    }
    GradCheckReport {
        checked: analytic.len(),
        passed,
        max_rel_err,
        worst,
    }
}
