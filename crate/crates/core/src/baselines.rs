//! Deterministic comparison policies: preference-order rankings (Naive),
//! reciprocal-score rankings (Prod), transferable-utility matching scores
//! (TU) and iterated maximum-weight matching (IterLP).

use ndarray::{Array2, ArrayView1};

use crate::birkhoff::max_gain_assignment;
use crate::error::{Error, Result};
use crate::model::{Instance, Policy};

/// Candidate indices in non-increasing score order, ties broken by lowest
/// index.
fn rank_desc(scores: ArrayView1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("ranking scores must not be NaN").then(a.cmp(&b))
    });
    idx
}

/// Ranks each side by its own estimated preferences.
pub fn naive_policy(inst: &Instance) -> Policy {
    let left: Vec<Vec<usize>> = inst.p1().rows().into_iter().map(rank_desc).collect();
    let right: Vec<Vec<usize>> = inst.p2().rows().into_iter().map(rank_desc).collect();
    Policy::from_rankings(&left, &right).expect("rank_desc always yields a bijection")
}

/// Ranks both sides by the reciprocal score p1[i][j] * p2[j][i].
pub fn prod_policy(inst: &Instance) -> Policy {
    let pair = inst.pair_probs();
    let left: Vec<Vec<usize>> = pair.rows().into_iter().map(rank_desc).collect();
    let right: Vec<Vec<usize>> = pair.columns().into_iter().map(rank_desc).collect();
    Policy::from_rankings(&left, &right).expect("rank_desc always yields a bijection")
}

/// Parameters of the transferable-utility fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuConfig {
    pub beta: f64,
    pub iters: usize,
}

impl Default for TuConfig {
    fn default() -> Self {
        Self { beta: 1.0, iters: 100 }
    }
}

impl TuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!("TU beta must be positive, got {}", self.beta)));
        }
        if self.iters == 0 {
            return Err(Error::InvalidConfig("TU iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Matching scores mu[i][j] = exp((p1[i][j] + p2[j][i]) / (2 beta)) X_i Y_j
/// from the two-sided fixed-point iteration. Both update sweeps use the
/// form sqrt(1 + s^2) - s, which keeps every X_i and Y_j in (0, 1].
pub fn tu_scores(inst: &Instance, cfg: &TuConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let (n, m) = (inst.n(), inst.m());
    let p1 = inst.p1();
    let p2 = inst.p2();
    let mut weights = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let w = ((p1[[i, j]] + p2[[j, i]]) / (2.0 * cfg.beta)).exp();
            if !w.is_finite() {
                return Err(Error::TuOverflow { iteration: 0 });
            }
            weights[[i, j]] = w;
        }
    }

    let mut x = vec![1.0f64; n];
    let mut y = vec![1.0f64; m];
    for t in 1..=cfg.iters {
        for i in 0..n {
            let s: f64 = 0.5 * (0..m).map(|j| weights[[i, j]] * y[j]).sum::<f64>();
            x[i] = contraction(s);
        }
        for j in 0..m {
            let s: f64 = 0.5 * (0..n).map(|i| weights[[i, j]] * x[i]).sum::<f64>();
            y[j] = contraction(s);
        }
        if x.iter().chain(y.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::TuOverflow { iteration: t });
        }
    }

    let mut mu = weights;
    for ((i, j), v) in mu.indexed_iter_mut() {
        *v *= x[i] * y[j];
    }
    Ok(mu)
}

/// sqrt(1 + s^2) - s computed without cancellation for large s.
fn contraction(s: f64) -> f64 {
    1.0 / ((1.0 + s * s).sqrt() + s)
}

/// Ranks both sides by descending TU matching score.
pub fn tu_policy(inst: &Instance, cfg: &TuConfig) -> Result<Policy> {
    let mu = tu_scores(inst, cfg)?;
    let left: Vec<Vec<usize>> = mu.rows().into_iter().map(rank_desc).collect();
    let right: Vec<Vec<usize>> = mu.columns().into_iter().map(rank_desc).collect();
    Ok(Policy::from_rankings(&left, &right).expect("rank_desc always yields a bijection"))
}

/// Weight assigned to removed edges when rebuilding the matching gains.
/// Any negative value keeps them out of the matching whenever an
/// alternative exists; padding entries use weight zero.
const DELETED: f64 = -1.0;

/// Iterated maximum-weight matching: round k matches the two sides under
/// the pair probabilities (smaller side saturated), places each matched
/// pair at position k of both lists, removes the matched edges and repeats.
/// Agents left unmatched in a round fall back to their lowest-index
/// not-yet-placed candidate, so every list ends up a full permutation.
pub fn iterlp_policy(inst: &Instance) -> Policy {
    let (n, m) = (inst.n(), inst.m());
    let pair = inst.pair_probs();
    let d = n.max(m);

    let mut deleted = Array2::from_elem((n, m), false);
    let mut a_placed = Array2::from_elem((n, m), false);
    let mut b_placed = Array2::from_elem((m, n), false);
    let mut a = vec![Array2::zeros((m, m)); n];
    let mut b = vec![Array2::zeros((n, n)); m];

    for k in 0..d {
        let mut gains = Array2::zeros((d, d));
        for i in 0..n {
            for j in 0..m {
                gains[[i, j]] = if deleted[[i, j]] { DELETED } else { pair[[i, j]] };
            }
        }
        let assignment =
            max_gain_assignment(&gains).expect("finite square gains cannot fail");
        let mut match_left = vec![None; n];
        let mut match_right = vec![None; m];
        for (row, &col) in assignment.iter().enumerate() {
            if row < n && col < m && !deleted[[row, col]] {
                match_left[row] = Some(col);
                match_right[col] = Some(row);
            }
        }

        let mut removals = Vec::new();
        if k < m {
            for i in 0..n {
                let j = match_left[i].unwrap_or_else(|| {
                    (0..m).find(|&j| !a_placed[[i, j]]).expect("positions left implies candidates left")
                });
                debug_assert!(!a_placed[[i, j]]);
                a[i][[j, k]] = 1.0;
                a_placed[[i, j]] = true;
                removals.push((i, j));
            }
        }
        if k < n {
            for j in 0..m {
                let i = match_right[j].unwrap_or_else(|| {
                    (0..n).find(|&i| !b_placed[[j, i]]).expect("positions left implies candidates left")
                });
                debug_assert!(!b_placed[[j, i]]);
                b[j][[i, k]] = 1.0;
                b_placed[[j, i]] = true;
                removals.push((i, j));
            }
        }
        for (i, j) in removals {
            deleted[[i, j]] = true;
        }
    }

    Policy { a, b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExaminationModel;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(p1: Array2<f64>, p2: Array2<f64>) -> Instance {
        Instance::new(p1, p2, ExaminationModel::inverse_log()).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
        instance(
            Array2::from_shape_fn((n, m), |_| rng.gen::<f64>()),
            Array2::from_shape_fn((m, n), |_| rng.gen::<f64>()),
        )
    }

    #[test]
    fn naive_ranking_order_and_ties() {
        let inst = instance(
            arr2(&[[0.2, 0.9, 0.5]]),
            arr2(&[[0.5], [0.5], [0.5]]),
        );
        let pol = naive_policy(&inst);
        // ranking (b2, b3, b1): candidate 1 at position 0, 2 at 1, 0 at 2
        assert_eq!(pol.a[0][[1, 0]], 1.0);
        assert_eq!(pol.a[0][[2, 1]], 1.0);
        assert_eq!(pol.a[0][[0, 2]], 1.0);
        // all right-side scores tie: lowest index first
        for j in 0..3 {
            assert_eq!(pol.b[j][[0, 0]], 1.0);
        }
    }

    #[test]
    fn prod_ranking_uses_reciprocal_scores() {
        let inst = instance(arr2(&[[1.0, 0.5]]), arr2(&[[0.1], [1.0]]));
        // scores (0.1, 0.5): candidate 1 first
        let pol = prod_policy(&inst);
        assert_eq!(pol.a[0][[1, 0]], 1.0);
        assert_eq!(pol.a[0][[0, 1]], 1.0);
    }

    #[test]
    fn prod_equals_naive_under_transposed_preferences() {
        // p2 = p1^T makes the reciprocal score p1^2, a monotone transform
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1 = Array2::from_shape_fn((4, 4), |_| rng.gen::<f64>());
        let inst = instance(p1.clone(), p1.t().to_owned());
        assert_eq!(prod_policy(&inst).a, naive_policy(&inst).a);
    }

    #[test]
    fn tu_scalar_fixed_point() {
        // all preferences zero, n = m = 1: weights are exp(0) = 1, so the
        // alternating updates contract to the solution of
        // x = sqrt(1 + (x/2)^2) - x/2, which is 1/sqrt(2).
        let inst = instance(arr2(&[[0.0]]), arr2(&[[0.0]]));
        let mu = tu_scores(&inst, &TuConfig::default()).unwrap();
        // independent scalar oracle: iterate the literal update rule
        let (mut x, mut y) = (1.0f64, 1.0f64);
        for _ in 0..100 {
            x = (1.0 + (0.5 * y) * (0.5 * y)).sqrt() - 0.5 * y;
            y = (1.0 + (0.5 * x) * (0.5 * x)).sqrt() - 0.5 * x;
        }
        assert!((mu[[0, 0]] - x * y).abs() < 1e-10);
        assert!((x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((y - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn tu_iterates_stay_in_unit_interval() {
        // the update form sqrt(1 + s^2) - s lies in (0, 1] for s >= 0;
        // check mu stays positive and the reference recomputation agrees
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let n = rng.gen_range(1..5);
            let m = rng.gen_range(1..5);
            let inst = random_instance(&mut rng, n, m);
            let cfg = TuConfig { beta: rng.gen_range(0.2..3.0), iters: 20 };
            let mu = tu_scores(&inst, &cfg).unwrap();
            assert!(mu.iter().all(|&v| v > 0.0));

            // literal reference re-implementation
            let mut x = vec![1.0; n];
            let mut y = vec![1.0; m];
            let w = |i: usize, j: usize| {
                ((inst.p1()[[i, j]] + inst.p2()[[j, i]]) / (2.0 * cfg.beta)).exp()
            };
            for _ in 0..cfg.iters {
                for i in 0..n {
                    let s = 0.5 * (0..m).map(|j| w(i, j) * y[j]).sum::<f64>();
                    x[i] = (1.0 + s * s).sqrt() - s;
                    assert!(x[i] > 0.0 && x[i] <= 1.0);
                }
                for j in 0..m {
                    let s = 0.5 * (0..n).map(|i| w(i, j) * x[i]).sum::<f64>();
                    y[j] = (1.0 + s * s).sqrt() - s;
                    assert!(y[j] > 0.0 && y[j] <= 1.0);
                }
            }
            for i in 0..n {
                for j in 0..m {
                    assert!((mu[[i, j]] - w(i, j) * x[i] * y[j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn tu_overflow_reported_for_tiny_beta() {
        let inst = instance(arr2(&[[1.0]]), arr2(&[[1.0]]));
        let err = tu_scores(&inst, &TuConfig { beta: 1e-4, iters: 10 }).unwrap_err();
        assert!(matches!(err, Error::TuOverflow { .. }));
    }

    #[test]
    fn tu_policy_identity_on_single_pair() {
        let inst = instance(arr2(&[[0.3]]), arr2(&[[0.9]]));
        let pol = tu_policy(&inst, &TuConfig::default()).unwrap();
        assert_eq!(pol.a[0][[0, 0]], 1.0);
        assert_eq!(pol.b[0][[0, 0]], 1.0);
    }

    #[test]
    fn iterlp_two_by_two_diagonal() {
        let inst = instance(arr2(&[[1.0, 0.1], [0.1, 1.0]]), arr2(&[[1.0, 0.1], [0.1, 1.0]]));
        let pol = iterlp_policy(&inst);
        // round 1 matches the diagonal pairs; each places its partner first
        assert_eq!(pol.a[0][[0, 0]], 1.0);
        assert_eq!(pol.a[1][[1, 0]], 1.0);
        assert_eq!(pol.b[0][[0, 0]], 1.0);
        assert_eq!(pol.b[1][[1, 0]], 1.0);
        assert!(pol.is_valid(&inst, 0.0));
    }

    #[test]
    fn iterlp_single_pair() {
        let inst = instance(arr2(&[[0.4]]), arr2(&[[0.7]]));
        let pol = iterlp_policy(&inst);
        assert_eq!(pol.a[0][[0, 0]], 1.0);
        assert_eq!(pol.b[0][[0, 0]], 1.0);
    }

    #[test]
    fn iterlp_rounds_form_matchings_and_lists_are_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.gen_range(2..7);
            let m = rng.gen_range(2..7);
            let inst = random_instance(&mut rng, n, m);
            let pol = iterlp_policy(&inst);
            // permutation-matrix policies, exactly
            assert!(pol.is_valid(&inst, 0.0));
            // within one agent's list every position holds a distinct candidate
            for ai in &pol.a {
                for row in ai.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn all_baselines_are_permutation_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let n = rng.gen_range(1..6);
            let m = rng.gen_range(1..6);
            let inst = random_instance(&mut rng, n, m);
            for pol in [
                naive_policy(&inst),
                prod_policy(&inst),
                tu_policy(&inst, &TuConfig::default()).unwrap(),
                iterlp_policy(&inst),
            ] {
                assert!(pol.is_valid(&inst, 0.0));
            }
        }
    }

    /// Brute-force maximum-weight matching over all injective row subsets.
    fn brute_matching_value(pair: &Array2<f64>) -> f64 {
        fn rec(pair: &Array2<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == pair.nrows() {
                return 0.0;
            }
            // skip this row
            let mut best = rec(pair, row + 1, used);
            for j in 0..pair.ncols() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(pair[[row, j]] + rec(pair, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(pair, 0, &mut vec![false; pair.ncols()])
    }

    #[test]
    fn padded_assignment_solves_max_weight_matching() {
        // the matching subroutine (square-padded assignment) attains the
        // combinatorial max-weight matching value: vertex solutions are 0/1
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..6);
            let m = rng.gen_range(1..6);
            let pair = Array2::from_shape_fn((n, m), |_| rng.gen::<f64>());
            let d = n.max(m);
            let mut gains = Array2::zeros((d, d));
            for i in 0..n {
                for j in 0..m {
                    gains[[i, j]] = pair[[i, j]];
                }
            }
            let assignment = max_gain_assignment(&gains).unwrap();
            let value: f64 = assignment
                .iter()
                .enumerate()
                .filter(|&(i, &j)| i < n && j < m)
                .map(|(i, &j)| pair[[i, j]])
                .sum();
            let brute = brute_matching_value(&pair);
            assert!((value - brute).abs() < 1e-9, "matching value {value} vs brute {brute}");
        }
    }
}
