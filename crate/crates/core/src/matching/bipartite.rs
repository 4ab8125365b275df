use crate::error::{Error, Result};

/// Maximum-weight matching of a rectangular weight matrix, `weights[row][col]`.
///
/// Returns `(row, col)` pairs with strictly positive weight, sorted by row.
/// Solved with the Hungarian method on costs `max - w` over the smaller side.
pub fn max_weight_bipartite(weights: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let rows = weights.len();
    if rows == 0 {
        return Ok(Vec::new());
    }
    let cols = weights[0].len();
    if let Some(r) = weights.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            found: r.len(),
        });
    }
    if weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument(
            "bipartite weights must be finite and non-negative".into(),
        ));
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    let transposed = rows > cols;
    let a: Vec<Vec<f64>> = if transposed {
        (0..cols).map(|c| (0..rows).map(|r| weights[r][c]).collect()).collect()
    } else {
        weights.to_vec()
    };
    let max = a.iter().flatten().copied().fold(0.0, f64::max);
    let assignment = hungarian(&a, max);
    let mut pairs: Vec<(usize, usize)> = assignment
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| a[r][c] > 0.0)
        .map(|(r, c)| if transposed { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Minimum-cost assignment of every row of `a` (rows <= cols) with cost
/// `max - a[r][c]`. Returns the column of each row.
fn hungarian(a: &[Vec<f64>], max: f64) -> Vec<usize> {
    let n = a.len();
    let m = a[0].len();
    let cost = |i: usize, j: usize| max - a[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row matched to column j (1-based, 0 = none)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
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
            for j in 0..=m {
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
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Sum of the weights of `pairs` in `weights`.
#[cfg(test)]
fn pair_total(weights: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| weights[r][c]).sum()
}
