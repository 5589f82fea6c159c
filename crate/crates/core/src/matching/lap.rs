//! Exact linear assignment via shortest augmenting paths with potentials,
//! O(n^3). Used as the Frank-Wolfe direction oracle and for the final
//! projection onto permutations.

use crate::error::{Error, Result};
use crate::graph::Permutation;
use ndarray::Array2;

/// Minimize sum_i cost(i, p(i)) over permutations. Returns the minimizer
/// and its total cost.
pub fn solve_lap(cost: &Array2<f64>) -> Result<(Permutation, f64)> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_lap",
            left: n,
            right: cost.ncols(),
        });
    }
    for ((i, j), &c) in cost.indexed_iter() {
        if !c.is_finite() {
            return Err(Error::NonFiniteCost(i, j));
        }
    }
    if n == 0 {
        return Ok((Permutation::identity(0), 0.0));
    }

    const INF: f64 = f64::INFINITY;
    // 1-based arrays; p[j] is the row assigned to column j (0 = none).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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

    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[p[j] - 1] = j - 1;
    }
    let perm = Permutation::new(mapping)?;
    let total = (0..n).map(|i| cost[[i, perm.apply(i)]]).sum();
    Ok((perm, total))
}
