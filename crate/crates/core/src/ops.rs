//! Elementary differentiable operations: softmax, L2 normalization, cosine
//! similarity — forward passes plus the matching hand-derived backward
//! passes used by the model's gradient tapes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Numerically stable softmax: subtracts the max logit before
/// exponentiating so that large-magnitude logits cannot overflow.
///
/// Errors on empty input and on non-finite logits.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("softmax"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax"));
    }
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |acc, &e| acc + e);
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Gradient of softmax: given the forward output `s` and the gradient `g`
/// flowing into it, the gradient wrt the logits is `s ⊙ (g − ⟨g, s⟩)`.
pub fn softmax_backward<T: Scalar>(s: &[T], g: &[T]) -> Vec<T> {
    assert_eq!(s.len(), g.len(), "softmax_backward: length mismatch");
    let gs = s
        .iter()
        .zip(g)
        .fold(T::zero(), |acc, (&si, &gi)| acc + si * gi);
    s.iter().zip(g).map(|(&si, &gi)| si * (gi - gs)).collect()
}

/// L2-normalizes a vector to unit length. Errors on the zero vector (no
/// direction to keep) and on non-finite entries.
pub fn l2_normalize<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("l2_normalize"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("l2_normalize"));
    }
    let norm = x
        .iter()
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt();
    if norm == T::zero() {
        return Err(Error::ZeroVector("l2_normalize"));
    }
    Ok(x.iter().map(|&v| v / norm).collect())
}

/// Gradient of L2 normalization: with `y = x/‖x‖` and incoming gradient
/// `g`, the gradient wrt `x` is `(g − y ⟨y, g⟩) / ‖x‖`.
pub fn l2_normalize_backward<T: Scalar>(x: &[T], g: &[T]) -> Vec<T> {
    assert_eq!(x.len(), g.len(), "l2_normalize_backward: length mismatch");
    let norm = x
        .iter()
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt();
    let y: Vec<T> = x.iter().map(|&v| v / norm).collect();
    let yg = y
        .iter()
        .zip(g)
        .fold(T::zero(), |acc, (&yi, &gi)| acc + yi * gi);
    y.iter()
        .zip(g)
        .map(|(&yi, &gi)| (gi - yi * yg) / norm)
        .collect()
}

/// Cosine similarity between two vectors, clamped into `[-1, 1]` to absorb
/// floating-point drift. Errors if either vector is zero or empty.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            context: "cosine_similarity",
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = l2_normalize(a)?;
    let nb = l2_normalize(b)?;
    let dot = na
        .iter()
        .zip(&nb)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    Ok(dot.min(T::one()).max(-T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let s = softmax(&[0.0f64, 0.0]).unwrap();
        assert_eq!(s, vec![0.5, 0.5]);
        let s3 = softmax(&[7.0f64, 7.0, 7.0]).unwrap();
        for &p in &s3 {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_recovers_exponential_ratios() {
        // logits = [ln 2, 0] → probabilities [2/3, 1/3].
        let s = softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-15);
        // logits = ln(1), ln(2), ln(3) → probabilities 1/6, 2/6, 3/6.
        let s = softmax(&[0.0f64, 2.0f64.ln(), 3.0f64.ln()]).unwrap();
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (p, e) in s.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
    }

    #[test]
    fn softmax_matches_direct_exp_sum_oracle() {
        let logits = [1.0f64, 2.0, 3.0];
        let s = softmax(&logits).unwrap();
        // plain unshifted recomputation (safe at this magnitude)
        let denom: f64 = logits.iter().map(|&x| x.exp()).sum();
        for (&p, &x) in s.iter().zip(&logits) {
            assert!((p - x.exp() / denom).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let s = softmax(&[1000.0f64, 999.0, 998.0]).unwrap();
        assert!(s.iter().all(|p| p.is_finite()));
        let total: f64 = s.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(
            softmax::<f64>(&[]),
            Err(Error::EmptyInput("softmax"))
        ));
        assert!(matches!(
            softmax(&[1.0, f64::NAN]),
            Err(Error::NonFinite("softmax"))
        ));
        assert!(matches!(
            softmax(&[f64::INFINITY, 0.0]),
            Err(Error::NonFinite("softmax"))
        ));
    }

    #[test]
    fn l2_normalize_pythagorean_triple() {
        let y = l2_normalize(&[3.0f64, 4.0]).unwrap();
        assert_eq!(y, vec![0.6, 0.8]);
        let axis = l2_normalize(&[0.0f64, 0.0, 5.0]).unwrap();
        assert_eq!(axis, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn l2_normalize_rejects_zero_vector() {
        assert!(matches!(
            l2_normalize(&[0.0f64, 0.0]),
            Err(Error::ZeroVector("l2_normalize"))
        ));
    }

    #[test]
    fn cosine_axis_cases() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[2.0, 0.0], &[5.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[-3.0, 0.0]).unwrap(), -1.0);
        let self_sim = cosine_similarity(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap();
        assert!((self_sim - 1.0).abs() < 1e-12);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    /// Independent O(n²) Jacobian oracle: J[i][j] = s_i (δ_ij − s_j),
    /// multiplied explicitly against the incoming gradient.
    fn softmax_backward_oracle(s: &[f64], g: &[f64]) -> Vec<f64> {
        let n = s.len();
        let mut out = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                let jac = if i == j {
                    s[i] * (1.0 - s[j])
                } else {
                    -s[i] * s[j]
                };
                out[j] += g[i] * jac;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f64..50.0, 1..16)) {
            let s = softmax(&logits).unwrap();
            let total: f64 = s.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|&p| p > 0.0 && p <= 1.0));
        }

        #[test]
        fn softmax_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let a = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|&x| x + shift).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_backward_matches_jacobian_oracle(
            logits in proptest::collection::vec(-10.0f64..10.0, 1..10),
            g in proptest::collection::vec(-5.0f64..5.0, 10),
        ) {
            let s = softmax(&logits).unwrap();
            let g = &g[..s.len()];
            let fast = softmax_backward(&s, g);
            let slow = softmax_backward_oracle(&s, g);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn normalized_vectors_have_unit_norm(
            x in proptest::collection::vec(-100.0f64..100.0, 1..16)
        ) {
            prop_assume!(x.iter().any(|&v| v.abs() > 1e-6));
            let y = l2_normalize(&x).unwrap();
            let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }

        #[test]
        fn l2_normalize_is_idempotent(
            x in proptest::collection::vec(-100.0f64..100.0, 1..16)
        ) {
            prop_assume!(x.iter().any(|&v| v.abs() > 1e-6));
            let once = l2_normalize(&x).unwrap();
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_is_scale_invariant_and_bounded(
            a in proptest::collection::vec(-10.0f64..10.0, 2..8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            s in 0.1f64..50.0,
        ) {
            prop_assume!(a.iter().any(|&v| v.abs() > 1e-3));
            let b = &b[..a.len()];
            prop_assume!(b.iter().any(|&v| v.abs() > 1e-3));
            let c1 = cosine_similarity(&a, b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c1));
            let scaled: Vec<f64> = a.iter().map(|&v| v * s).collect();
            let c2 = cosine_similarity(&scaled, b).unwrap();
            prop_assert!((c1 - c2).abs() < 1e-9);
        }
    }
}
