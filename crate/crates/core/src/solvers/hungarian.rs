//! Maximum-weight perfect matching on a square bipartite graph.

use crate::domain::ActionVector;
use crate::error::{Error, Result};

use super::check_finite;

/// Solves the k-by-k assignment problem for a row-major value matrix.
///
/// Returns the matching with maximum total value; among optima, the one whose
/// chosen option indices are lexicographically smallest (rows settled in
/// order, each taking the lowest-index column that still allows the optimum).
pub fn solve_assignment(theta: &[f64], k: usize) -> Result<ActionVector> {
    if k < 1 {
        return Err(Error::InvalidArgument("assignment needs k >= 1".into()));
    }
    if theta.len() != k * k {
        return Err(Error::DimensionMismatch(format!(
            "value matrix has {} entries, expected {}x{}",
            theta.len(),
            k,
            k
        )));
    }
    check_finite(theta)?;

    let mut avail: Vec<usize> = (0..k).collect();
    let mut indices = Vec::with_capacity(k);
    for i in 0..k {
        let rows: Vec<usize> = (i + 1..k).collect();
        let mut best = f64::NEG_INFINITY;
        let mut best_pos = 0usize;
        for (pos, &c) in avail.iter().enumerate() {
            let sub_cols: Vec<usize> = avail.iter().copied().filter(|&x| x != c).collect();
            let val = theta[i * k + c] + matching_value(theta, k, &rows, &sub_cols);
            // Strict improvement only: exact ties keep the lowest column.
            if val > best {
                best = val;
                best_pos = pos;
            }
        }
        let c = avail.remove(best_pos);
        indices.push(i * k + c);
    }
    ActionVector::from_indices(k * k, &indices)
}

/// Value of the best perfect matching between the given rows and columns of
/// the full k-by-k matrix. O(n^3) Hungarian algorithm on costs `-theta`.
fn matching_value(theta: &[f64], k: usize, rows: &[usize], cols: &[usize]) -> f64 {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    if n == 0 {
        return 0.0;
    }
    let cost = |i: usize, j: usize| -theta[rows[i] * k + cols[j]];

    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
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
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    -(1..=n).map(|j| cost(p[j] - 1, j - 1)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::reward;
    use crate::domain::ThetaVector;

    #[test]
    fn two_by_two_prefers_the_diagonal() {
        let a = solve_assignment(&[0.9, 0.1, 0.2, 0.8], 2).unwrap();
        assert_eq!(a.chosen(), vec![0, 3]);
        let theta = ThetaVector::new(vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        assert!((reward(&a, &theta).unwrap() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn identity_matrix_takes_the_diagonal() {
        let a = solve_assignment(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(a.chosen(), vec![0, 3]);
    }

    #[test]
    fn constant_matrix_ties_break_to_the_identity_matching() {
        let a = solve_assignment(&[0.5; 9], 3).unwrap();
        assert_eq!(a.chosen(), vec![0, 4, 8]);
    }

    #[test]
    fn rejects_non_square_input() {
        assert!(solve_assignment(&[0.1, 0.2, 0.3], 2).is_err());
    }

    #[test]
    fn single_row_matches_its_only_column() {
        let a = solve_assignment(&[0.25], 1).unwrap();
        assert_eq!(a.chosen(), vec![0]);
    }

    #[test]
    fn matches_exhaustive_search_on_a_fixed_instance() {
        // 3x3 matrix with a non-obvious optimum.
        let theta = [0.2, 0.9, 0.4, 0.8, 0.3, 0.1, 0.5, 0.6, 0.7];
        let a = solve_assignment(&theta, 3).unwrap();
        // Best is 0->1, 1->0, 2->2: 0.9 + 0.8 + 0.7 = 2.4.
        assert_eq!(a.chosen(), vec![1, 3, 8]);
    }
}
