//! Minimum-cost bipartite assignment (Hungarian method with potentials).

use nalgebra::DMatrix;

/// Entry value used to forbid a pairing.
pub const MASK_COST: f64 = 1e5;

pub type CostMatrix = DMatrix<f64>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(row, column)` pairs, sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Minimum-total-cost matching of `min(rows, cols)` pairs.
///
/// Shortest augmenting paths over reduced costs; `O(n^2 m)` for an
/// `n x m` matrix with `n <= m` (the matrix is transposed otherwise).
pub fn linear_assignment(costs: &CostMatrix) -> Vec<(usize, usize)> {
    let (r, c) = costs.shape();
    if r == 0 || c == 0 {
        return Vec::new();
    }
    if r > c {
        let mut pairs: Vec<(usize, usize)> = linear_assignment(&costs.transpose())
            .into_iter()
            .map(|(i, j)| (j, i))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    let (n, m) = (r, c);
    // 1-based bookkeeping; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1, j - 1)] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Gated assignment. Entries above `gate` are raised to `gate + 1e-5`
/// before solving so that they never pull other pairs away from their
/// optimum, and any pair costing more than `gate` is reported unmatched.
pub fn hungarian_solve(costs: &CostMatrix, gate: f64) -> Assignment {
    let (r, c) = costs.shape();
    let clamped = costs.map(|x| if x > gate { gate + 1e-5 } else { x });
    let mut row_used = vec![false; r];
    let mut col_used = vec![false; c];
    let mut matches = Vec::new();
    for (i, j) in linear_assignment(&clamped) {
        let cost = costs[(i, j)];
        if cost <= gate && cost < MASK_COST {
            row_used[i] = true;
            col_used[j] = true;
            matches.push((i, j));
        }
    }
    Assignment {
        matches,
        unmatched_rows: (0..r).filter(|&i| !row_used[i]).collect(),
        unmatched_cols: (0..c).filter(|&j| !col_used[j]).collect(),
    }
}
