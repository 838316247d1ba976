//! Minimum-cost assignment between current and goal cells.
//!
//! The configuration distance is the smallest total Euclidean distance over
//! all one-to-one pairings of current cells with goal cells. Modules are
//! treated as interchangeable, so module 0 takes part like any other.

use crate::error::{Error, Result};
use crate::geometry::Cell;

/// Square matrix of nonnegative finite costs, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::SizeMismatch { expected: n, got: row.len() });
            }
            for (j, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::BadCost { row: i, col: j, value });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(CostMatrix { n, data })
    }

    /// Pairwise Euclidean distances: entry (i, j) is `|from[i] − to[j]|`.
    pub fn euclidean(from: &[Cell], to: &[Cell]) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::SizeMismatch { expected: from.len(), got: to.len() });
        }
        let n = from.len();
        let mut data = Vec::with_capacity(n * n);
        for &a in from {
            data.extend(to.iter().map(|&b| a.euclidean(b)));
        }
        Ok(CostMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `permutation[i]` is the column assigned to row `i`.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
}

/// Optimal assignment. Among optimal permutations the lexicographically
/// smallest one is returned.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let n = cost.size();
    if n == 0 {
        return Assignment { permutation: Vec::new(), total_cost: 0.0 };
    }
    let optimum = solve(cost, &[]).0;
    let tol = 1e-9 * optimum.abs().max(1.0);

    // Fix rows one at a time to the smallest column that keeps the optimum
    // attainable.
    let mut prefix: Vec<usize> = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let mut chosen = None;
        for col in 0..n {
            if prefix.contains(&col) {
                continue;
            }
            prefix.push(col);
            let rest = if row + 1 == n { 0.0 } else { solve(cost, &prefix).0 };
            let total = fixed_cost + cost.get(row, col) + rest;
            if total <= optimum + tol {
                chosen = Some(col);
                fixed_cost += cost.get(row, col);
                break;
            }
            prefix.pop();
        }
        // the optimum is always attainable with at least one column
        debug_assert!(chosen.is_some());
        if chosen.is_none() {
            return solve_assignment(cost);
        }
    }
    let total_cost = prefix.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Assignment { permutation: prefix, total_cost }
}

fn solve_assignment(cost: &CostMatrix) -> Assignment {
    let (total_cost, permutation) = solve(cost, &[]);
    Assignment { permutation, total_cost }
}

/// Shortest-augmenting-path Hungarian method with row and column potentials,
/// O(n³). Rows `0..fixed.len()` are pinned to the given columns; the rest
/// are solved optimally. Returns the cost of the free part and the full
/// row → column map.
fn solve(cost: &CostMatrix, fixed: &[usize]) -> (f64, Vec<usize>) {
    let n = cost.size();
    let rows: Vec<usize> = (fixed.len()..n).collect();
    let cols: Vec<usize> = (0..n).filter(|c| !fixed.contains(c)).collect();
    let m = rows.len();
    let at = |i: usize, j: usize| cost.get(rows[i - 1], cols[j - 1]);

    // 1-based with a virtual column 0, after the classic formulation
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    perm[..fixed.len()].copy_from_slice(fixed);
    let mut free_cost = 0.0;
    for j in 1..=m {
        let i = row_of[j];
        perm[rows[i - 1]] = cols[j - 1];
        free_cost += at(i, j);
    }
    (free_cost, perm)
}

/// Minimum total Euclidean distance between two equally sized cell sets.
pub fn config_distance(state: &[Cell], goal: &[Cell]) -> Result<f64> {
    let cost = CostMatrix::euclidean(state, goal)?;
    Ok(solve(&cost, &[]).0)
}
