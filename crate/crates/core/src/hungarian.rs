//! Optimal assignment between two sets, used to associate detections with
//! tracks across frames.
//!
//! The core is the O(n³) potential-based Hungarian algorithm on a square
//! cost matrix. [`match_by_similarity`] wraps it for the tracking use case:
//! it maximizes total similarity over a possibly rectangular matrix (by
//! negating against the max entry and padding to square), then discards any
//! matched pair whose similarity falls below an acceptance threshold.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Returns `assign` with `assign[row] = col`. Deterministic for a given
/// matrix. Panics if the matrix is not square.
pub fn min_cost_assignment<T: Scalar>(cost: &Matrix<T>) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "min_cost_assignment: matrix must be square");
    if n == 0 {
        return Vec::new();
    }

    // Potential-based shortest-augmenting-path formulation, 1-indexed with
    // a virtual column 0. `p[j]` is the row matched to column j.
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost.row(i0 - 1)[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // augment along the found path
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Maximum-similarity assignment with an acceptance threshold.
///
/// Works on a rectangular `rows × cols` similarity matrix: converts to a
/// cost problem via `cost = max_entry − similarity`, pads to square with a
/// constant so padding cannot distort the optimum among real pairs, solves
/// for the optimal perfect matching, drops pairs involving padding, and
/// finally drops real pairs whose similarity does not strictly exceed
/// `threshold`.
///
/// Returns `(row, col)` pairs sorted by row. Errors on non-finite entries.
pub fn match_by_similarity<T: Scalar>(
    sim: &Matrix<T>,
    threshold: T,
) -> Result<Vec<(usize, usize)>> {
    let (rows, cols) = (sim.rows(), sim.cols());
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    if sim.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("match_by_similarity"));
    }
    let size = rows.max(cols);
    let max_entry = sim
        .data()
        .iter()
        .cloned()
        .fold(T::neg_infinity(), T::max);

    let mut cost = Matrix::zeros(size, size);
    for r in 0..rows {
        for c in 0..cols {
            cost.row_mut(r)[c] = max_entry - sim.row(r)[c];
        }
    }
    // padded cells keep cost 0; every padded row/col contributes a constant
    // to any perfect matching, so the real-pair optimum is unaffected

    let assign = min_cost_assignment(&cost);
    let mut pairs: Vec<(usize, usize)> = assign
        .iter()
        .enumerate()
        .filter(|&(r, &c)| r < rows && c < cols && sim.row(r)[c] > threshold)
        .map(|(r, &c)| (r, c))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: enumerate all permutations of the square matrix
    /// and return the best (here: minimum) total. Exponential, so only for
    /// small n.
    fn brute_force_min_total(cost: &Matrix<f64>) -> f64 {
        fn permute(cols: &mut Vec<usize>, k: usize, cost: &Matrix<f64>, best: &mut f64) {
            let n = cols.len();
            if k == n {
                let total: f64 = (0..n).map(|r| cost.row(r)[cols[r]]).sum();
                if total < *best {
                    *best = total;
                }
                return;
            }
            for i in k..n {
                cols.swap(k, i);
                permute(cols, k + 1, cost, best);
                cols.swap(k, i);
            }
        }
        let n = cost.rows();
        let mut cols: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut cols, 0, cost, &mut best);
        best
    }

    fn total_of(cost: &Matrix<f64>, assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(r, &c)| cost.row(r)[c]).sum()
    }

    #[test]
    fn diagonal_dominant_pairs_kept_above_threshold() {
        // Optimum is {0→0, 1→1} (total 1.75) and both survive γ = 0.8.
        let sim = Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.2, 0.85]);
        let pairs = match_by_similarity(&sim, 0.8).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn picks_joint_optimum_not_identity() {
        // {0→1, 1→0} totals 0.95 + 0.2 = 1.15, beating the identity
        // matching's 0.9 + 0.1 = 1.0.
        let sim = Matrix::from_vec(2, 2, vec![0.9, 0.95, 0.2, 0.1]);
        let pairs = match_by_similarity(&sim, f64::NEG_INFINITY).unwrap();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn threshold_drops_weak_pairs_after_matching() {
        // Same matrix, threshold 0.8: the optimal matching {0→1, 1→0} is
        // computed first — so (0,0) never appears even though 0.9 > 0.8 —
        // and then (1,0) with similarity 0.2 ≤ 0.8 is discarded.
        let sim = Matrix::from_vec(2, 2, vec![0.9, 0.95, 0.2, 0.1]);
        let pairs = match_by_similarity(&sim, 0.8).unwrap();
        assert_eq!(pairs, vec![(0, 1)]);
    }

    #[test]
    fn threshold_is_strict() {
        let sim = Matrix::from_vec(1, 1, vec![0.8]);
        assert!(match_by_similarity(&sim, 0.8).unwrap().is_empty());
        assert_eq!(
            match_by_similarity(&sim, 0.79).unwrap(),
            vec![(0, 0)]
        );
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let sim = Matrix::from_vec(1, 2, vec![0.5, f64::NAN]);
        assert!(match_by_similarity(&sim, 0.0).is_err());
    }

    #[test]
    fn rectangular_more_columns() {
        // 1×3: single row takes the best column.
        let sim = Matrix::from_vec(1, 3, vec![0.1, 0.7, 0.3]);
        assert_eq!(match_by_similarity(&sim, 0.0).unwrap(), vec![(0, 1)]);
    }

    #[test]
    fn rectangular_more_rows() {
        // 3×1: the column goes to the best row, others stay unmatched.
        let sim = Matrix::from_vec(3, 1, vec![0.2, 0.9, 0.4]);
        assert_eq!(match_by_similarity(&sim, 0.0).unwrap(), vec![(1, 0)]);
    }

    #[test]
    fn empty_inputs_yield_no_pairs() {
        let sim: Matrix<f64> = Matrix::zeros(0, 4);
        assert!(match_by_similarity(&sim, 0.5).unwrap().is_empty());
        let sim: Matrix<f64> = Matrix::zeros(3, 0);
        assert!(match_by_similarity(&sim, 0.5).unwrap().is_empty());
    }

    proptest! {
        /// Entries drawn from the dyadic grid k/64 so permutation totals
        /// are exact in f64 and the comparison against the brute-force
        /// oracle can demand equality rather than a tolerance.
        #[test]
        fn matches_brute_force_on_small_square_matrices(
            n in 1usize..=6,
            raw in proptest::collection::vec(0u8..=64, 36),
        ) {
            let data: Vec<f64> = raw[..n * n].iter().map(|&k| k as f64 / 64.0).collect();
            let cost = Matrix::from_vec(n, n, data);
            let assign = min_cost_assignment(&cost);
            // must be a permutation
            let mut seen = vec![false; n];
            for &c in &assign {
                prop_assert!(!seen[c]);
                seen[c] = true;
            }
            prop_assert_eq!(total_of(&cost, &assign), brute_force_min_total(&cost));
        }

        /// Maximizing over similarities must match negated brute force.
        #[test]
        fn maximization_agrees_with_negated_oracle(
            n in 1usize..=5,
            raw in proptest::collection::vec(0u8..=64, 25),
        ) {
            let data: Vec<f64> = raw[..n * n].iter().map(|&k| k as f64 / 64.0).collect();
            let sim = Matrix::from_vec(n, n, data.clone());
            let pairs = match_by_similarity(&sim, f64::NEG_INFINITY).unwrap();
            prop_assert_eq!(pairs.len(), n);
            let total: f64 = pairs.iter().map(|&(r, c)| sim.row(r)[c]).sum();

            let neg = Matrix::from_vec(n, n, data.iter().map(|&x| -x).collect());
            let best = -brute_force_min_total(&neg);
            prop_assert_eq!(total, best);
        }
    }
}
