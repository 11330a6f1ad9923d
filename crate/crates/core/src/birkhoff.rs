//! Linear maximization over a single doubly stochastic matrix: exact
//! solution via the assignment problem and entropic approximation via
//! Sinkhorn scaling.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Turns a gain matrix into a nonnegative cost matrix with the same
/// maximizer structure: C = max(G) - G, so maximizers of G are minimizers
/// of C and the smallest cost is exactly zero.
pub fn gain_to_cost(gain: &Array2<f64>) -> Result<Array2<f64>> {
    check_finite(gain)?;
    let max = gain.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(gain.mapv(|g| max - g))
}

fn check_finite(mat: &Array2<f64>) -> Result<()> {
    for ((r, c), &v) in mat.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: r, col: c });
        }
    }
    Ok(())
}

fn check_square(mat: &Array2<f64>) -> Result<usize> {
    let (rows, cols) = mat.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    Ok(rows)
}

/// Exact linear maximization of `<G, X>` over doubly stochastic `X`.
///
/// The optimum is attained at a permutation matrix (a vertex of the
/// Birkhoff polytope); among optimal permutations, the lexicographically
/// smallest assignment in row order is returned, so constant matrices map
/// to the identity and results are reproducible across platforms.
pub fn linear_max_exact(gain: &Array2<f64>) -> Result<Array2<f64>> {
    let assignment = max_gain_assignment(gain)?;
    let d = assignment.len();
    let mut x = Array2::zeros((d, d));
    for (row, col) in assignment.iter().enumerate() {
        x[[row, *col]] = 1.0;
    }
    Ok(x)
}

/// Row-to-column assignment maximizing total gain, lexicographically
/// smallest among the maximizers.
pub(crate) fn max_gain_assignment(gain: &Array2<f64>) -> Result<Vec<usize>> {
    check_square(gain)?;
    check_finite(gain)?;
    let cost = {
        let max = gain.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        gain.mapv(|g| max - g)
    };
    let (row_to_col, pot_u, pot_v) = min_cost_assignment(&cost);
    Ok(lex_min_on_tight_graph(&cost, row_to_col, &pot_u, &pot_v))
}

/// Shortest-augmenting-path assignment (Jonker-Volgenant style, O(d^3))
/// for a square nonnegative cost matrix. Returns the assignment and dual
/// potentials u, v with cost[i][j] >= u[i] + v[j] and equality on matched
/// edges.
fn min_cost_assignment(cost: &Array2<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let d = cost.nrows();
    // 1-indexed arrays with a virtual column 0
    let mut u = vec![0.0f64; d + 1];
    let mut v = vec![0.0f64; d + 1];
    let mut col_to_row = vec![0usize; d + 1]; // 0 = unassigned
    let mut way = vec![0usize; d + 1];

    for row in 1..=d {
        col_to_row[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; d + 1];
        let mut used = vec![false; d + 1];
        loop {
            used[j0] = true;
            let i0 = col_to_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=d {
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
            for j in 0..=d {
                if used[j] {
                    u[col_to_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_to_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_to_row[j0] = col_to_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; d];
    for j in 1..=d {
        row_to_col[col_to_row[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every optimal assignment lies in the graph of dual-tight edges. Starting
/// from one optimal assignment, rewire it row by row to the
/// lexicographically smallest perfect matching of that graph.
fn lex_min_on_tight_graph(
    cost: &Array2<f64>,
    mut row_to_col: Vec<usize>,
    pot_u: &[f64],
    pot_v: &[f64],
) -> Vec<usize> {
    let d = cost.nrows();
    let scale = cost.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let eps = 1e-9 * (1.0 + scale);
    let tight: Vec<Vec<usize>> = (0..d)
        .map(|i| {
            (0..d)
                .filter(|&j| (cost[[i, j]] - pot_u[i] - pot_v[j]).abs() <= eps)
                .collect()
        })
        .collect();

    let mut col_to_row = vec![usize::MAX; d];
    for (row, &col) in row_to_col.iter().enumerate() {
        col_to_row[col] = row;
    }
    let mut fixed = vec![false; d]; // by column

    for row in 0..d {
        for &cand in &tight[row] {
            if fixed[cand] {
                continue;
            }
            if row_to_col[row] == cand {
                break;
            }
            // try to give `cand` to `row` and re-match the displaced row
            let displaced = col_to_row[cand];
            let freed = row_to_col[row];
            row_to_col[row] = cand;
            col_to_row[cand] = row;
            col_to_row[freed] = usize::MAX;
            let mut visited = vec![false; d];
            visited[cand] = true;
            if augment(displaced, &tight, &fixed, &mut row_to_col, &mut col_to_row, &mut visited) {
                break;
            }
            // revert
            col_to_row[freed] = row;
            row_to_col[row] = freed;
            col_to_row[cand] = displaced;
        }
        fixed[row_to_col[row]] = true;
    }
    row_to_col
}

fn augment(
    row: usize,
    tight: &[Vec<usize>],
    fixed: &[bool],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for &col in &tight[row] {
        if fixed[col] || visited[col] {
            continue;
        }
        visited[col] = true;
        let owner = col_to_row[col];
        if owner == usize::MAX
            || augment(owner, tight, fixed, row_to_col, col_to_row, visited)
        {
            row_to_col[row] = col;
            col_to_row[col] = row;
            return true;
        }
    }
    false
}

/// Entropic-regularization parameters for [`sinkhorn`].
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornConfig {
    /// Regularization strength; larger tau approximates the exact linear
    /// optimum more closely but risks overflow in the plain domain.
    pub tau: f64,
    pub max_iters: usize,
    /// Stop once no row or column sum deviates from 1 by more than this.
    pub stop_tol: f64,
    /// Run the stabilized log-domain updates instead of plain scaling.
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { tau: 200.0, max_iters: 500, stop_tol: 1e-6, log_domain: false }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("sinkhorn tau must be positive, got {}", self.tau)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("sinkhorn max_iters must be at least 1".into()));
        }
        if self.stop_tol < 0.0 {
            return Err(Error::InvalidConfig("sinkhorn stop_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Result of a Sinkhorn run. `matrix` is strictly positive and approximately
/// doubly stochastic; `converged` says whether `stop_tol` was reached within
/// `max_iters`.
#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub matrix: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_marginal_deviation: f64,
}

/// Scaling vectors carried between warm-started runs: (u, v) in the plain
/// domain, (log u, log v) in the log domain.
pub type SinkhornState = (Array1<f64>, Array1<f64>);

/// Scales exp(-tau * C) to an approximately doubly stochastic matrix.
pub fn sinkhorn(cost: &Array2<f64>, cfg: &SinkhornConfig) -> Result<SinkhornOutput> {
    sinkhorn_warm(cost, cfg, None).map(|(out, _)| out)
}

/// Like [`sinkhorn`] but optionally resuming from previous scaling vectors;
/// returns the final vectors for reuse. The state layout must match the
/// configured domain.
pub fn sinkhorn_warm(
    cost: &Array2<f64>,
    cfg: &SinkhornConfig,
    warm: Option<&SinkhornState>,
) -> Result<(SinkhornOutput, SinkhornState)> {
    cfg.validate()?;
    let d = check_square(cost)?;
    check_finite(cost)?;
    if let Some(&v) = cost.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidConfig(format!("sinkhorn cost must be nonnegative, got {v}")));
    }
    if let Some((wu, wv)) = warm {
        if wu.len() != d || wv.len() != d {
            return Err(Error::InvalidConfig("sinkhorn warm-start state has wrong length".into()));
        }
    }
    if cfg.log_domain {
        sinkhorn_log(cost, cfg, warm)
    } else {
        sinkhorn_plain(cost, cfg, warm)
    }
}

fn sinkhorn_plain(
    cost: &Array2<f64>,
    cfg: &SinkhornConfig,
    warm: Option<&SinkhornState>,
) -> Result<(SinkhornOutput, SinkhornState)> {
    let d = cost.nrows();
    let kernel = cost.mapv(|c| (-cfg.tau * c).exp());
    let mut u = warm.map_or_else(|| Array1::ones(d), |(wu, _)| wu.clone());
    let mut v = warm.map_or_else(|| Array1::ones(d), |(_, wv)| wv.clone());

    let mut iterations = 0;
    let mut converged = false;
    let mut deviation = f64::INFINITY;
    for t in 1..=cfg.max_iters {
        iterations = t;
        let kv = kernel.dot(&v);
        if kv.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::SinkhornOverflow { iteration: t });
        }
        u = kv.mapv(|x| 1.0 / x);
        let ktu = kernel.t().dot(&u);
        if ktu.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::SinkhornOverflow { iteration: t });
        }
        v = ktu.mapv(|x| 1.0 / x);
        // column sums are exactly 1 after the v update; check rows
        let row_sums = &u * &kernel.dot(&v);
        deviation = row_sums.iter().fold(0.0f64, |a, &s| a.max((s - 1.0).abs()));
        if !deviation.is_finite() {
            return Err(Error::SinkhornOverflow { iteration: t });
        }
        if deviation <= cfg.stop_tol {
            converged = true;
            break;
        }
    }

    let mut matrix = kernel;
    for ((r, c), x) in matrix.indexed_iter_mut() {
        *x *= u[r] * v[c];
    }
    let out = SinkhornOutput {
        max_marginal_deviation: marginal_deviation(&matrix).max(deviation.min(f64::MAX)),
        matrix,
        iterations,
        converged,
    };
    Ok((out, (u, v)))
}

fn sinkhorn_log(
    cost: &Array2<f64>,
    cfg: &SinkhornConfig,
    warm: Option<&SinkhornState>,
) -> Result<(SinkhornOutput, SinkhornState)> {
    let d = cost.nrows();
    let log_kernel = cost.mapv(|c| -cfg.tau * c);
    let mut f = warm.map_or_else(|| Array1::zeros(d), |(wf, _)| wf.clone());
    let mut g = warm.map_or_else(|| Array1::zeros(d), |(_, wg)| wg.clone());

    let mut iterations = 0;
    let mut converged = false;
    let mut deviation = f64::INFINITY;
    for t in 1..=cfg.max_iters {
        iterations = t;
        for r in 0..d {
            f[r] = -log_sum_exp((0..d).map(|c| log_kernel[[r, c]] + g[c]));
        }
        for c in 0..d {
            g[c] = -log_sum_exp((0..d).map(|r| log_kernel[[r, c]] + f[r]));
        }
        deviation = (0..d)
            .map(|r| {
                let lse = log_sum_exp((0..d).map(|c| log_kernel[[r, c]] + g[c]));
                ((f[r] + lse).exp() - 1.0).abs()
            })
            .fold(0.0f64, f64::max);
        if deviation <= cfg.stop_tol {
            converged = true;
            break;
        }
    }

    let mut matrix = log_kernel;
    for ((r, c), x) in matrix.indexed_iter_mut() {
        *x = (*x + f[r] + g[c]).exp();
    }
    let out = SinkhornOutput {
        max_marginal_deviation: marginal_deviation(&matrix).max(deviation.min(f64::MAX)),
        matrix,
        iterations,
        converged,
    };
    Ok((out, (f, g)))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn marginal_deviation(matrix: &Array2<f64>) -> f64 {
    let mut dev: f64 = 0.0;
    for row in matrix.rows() {
        dev = dev.max((row.sum() - 1.0).abs());
    }
    for col in matrix.columns() {
        dev = dev.max((col.sum() - 1.0).abs());
    }
    dev
}

/// Approximate linear maximization of `<G, X>` over doubly stochastic `X`:
/// the gain-to-cost transform followed by Sinkhorn scaling.
pub fn linear_max_sinkhorn(gain: &Array2<f64>, cfg: &SinkhornConfig) -> Result<SinkhornOutput> {
    check_square(gain)?;
    let cost = gain_to_cost(gain)?;
    sinkhorn(&cost, cfg)
}
