//! Maximum-weight bipartite assignment (Hungarian algorithm with potentials).

/// Optimal one-to-one matching of rows to columns of the `rows × cols` weight
/// matrix `w` maximizing the total weight. Returns `(total, matches)` where
/// `matches[r] = Some(c)` for matched rows; `min(rows, cols)` rows are matched.
pub fn max_weight_assignment(w: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    // The solver needs rows ≤ cols; transpose otherwise.
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| w[r][c]).collect()).collect();
        let (total, col_match) = max_weight_assignment(&t);
        let mut matches = vec![None; rows];
        for (c, r) in col_match.into_iter().enumerate() {
            if let Some(r) = r {
                matches[r] = Some(c);
            }
        }
        return (total, matches);
    }
    let cost = |r: usize, c: usize| -w[r][c];
    // 1-based potentials formulation; column 0 is a virtual start.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
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
    let mut matches = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            matches[p[j] - 1] = Some(j - 1);
        }
    }
    // Sum the original weights rather than trusting the potentials' rounding.
    let total = matches.iter().enumerate().filter_map(|(r, c)| c.map(|c| w[r][c])).sum();
    (total, matches)
}
