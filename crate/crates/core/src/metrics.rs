//! Utilities, welfare objectives, envy counts, Gini indices and Pareto
//! dominance for a policy on an instance.

use ndarray::{Array1, Array2};

use crate::model::{Instance, Policy, Side};

/// Utilities at or below this floor are treated as zero in log/ratio
/// computations (log-NSW values and NSW/alpha-SW gradient scalings).
pub const UTILITY_FLOOR: f64 = 1e-12;

/// Position-weighted exposure of every candidate in every list.
///
/// `left[(i, j)]` = sum_k e(k) A_i(j,k): how much attention left agent i's
/// list gives right agent j. `right[(j, i)]` is the mirror image.
pub(crate) struct Exposures {
    pub left: Array2<f64>,
    pub right: Array2<f64>,
}

pub(crate) fn exposures(inst: &Instance, pol: &Policy) -> Exposures {
    let em = inst.exam_left();
    let en = inst.exam_right();
    let mut left = Array2::zeros((inst.n(), inst.m()));
    for (i, ai) in pol.a.iter().enumerate() {
        left.row_mut(i).assign(&ai.dot(&em));
    }
    let mut right = Array2::zeros((inst.m(), inst.n()));
    for (j, bj) in pol.b.iter().enumerate() {
        right.row_mut(j).assign(&bj.dot(&en));
    }
    Exposures { left, right }
}

fn utilities_from(inst: &Instance, exp: &Exposures) -> (Array1<f64>, Array1<f64>) {
    let (n, m) = (inst.n(), inst.m());
    let pair = inst.pair_probs();
    let mut u = Array1::zeros(n);
    let mut v = Array1::zeros(m);
    for i in 0..n {
        for j in 0..m {
            let w = pair[[i, j]] * exp.left[[i, j]] * exp.right[[j, i]];
            u[i] += w;
            v[j] += w;
        }
    }
    (u, v)
}

/// Expected matches per agent: `U_i` for the left side, `V_j` for the right.
/// Both vectors sum to the same total, the social welfare.
pub fn utilities(inst: &Instance, pol: &Policy) -> (Array1<f64>, Array1<f64>) {
    assert_eq!(pol.a.len(), inst.n(), "policy has {} A matrices, instance has n = {}", pol.a.len(), inst.n());
    assert_eq!(pol.b.len(), inst.m(), "policy has {} B matrices, instance has m = {}", pol.b.len(), inst.m());
    utilities_from(inst, &exposures(inst, pol))
}

/// Total expected number of matches.
pub fn social_welfare(inst: &Instance, pol: &Policy) -> f64 {
    utilities(inst, pol).0.sum()
}

/// Log Nash social welfare of one side: sum of log utilities. Returns
/// negative infinity when any utility is at or below [`UTILITY_FLOOR`].
pub fn nsw_log(inst: &Instance, pol: &Policy, side: Side) -> f64 {
    let (u, v) = utilities(inst, pol);
    let utils = match side {
        Side::Left => u,
        Side::Right => v,
    };
    nsw_log_of(&utils)
}

pub(crate) fn nsw_log_of(utils: &Array1<f64>) -> f64 {
    if utils.iter().any(|&x| x <= UTILITY_FLOOR) {
        f64::NEG_INFINITY
    } else {
        utils.iter().map(|&x| x.ln()).sum()
    }
}

/// alpha-social welfare of one side: (1/alpha) * sum of utility^alpha,
/// for alpha in (0, 1]. At alpha = 1 this is the side's utility sum.
pub fn alpha_sw(inst: &Instance, pol: &Policy, side: Side, alpha: f64) -> f64 {
    assert!(
        alpha > 0.0 && alpha <= 1.0,
        "alpha must lie in (0, 1], got {alpha}"
    );
    let (u, v) = utilities(inst, pol);
    let utils = match side {
        Side::Left => u,
        Side::Right => v,
    };
    utils.iter().map(|&x| x.powf(alpha)).sum::<f64>() / alpha
}

/// Utility an agent would obtain from another same-side agent's rows in the
/// opposite side's lists. With `agent == other` this equals the agent's own
/// utility.
pub fn opportunity_utility(
    inst: &Instance,
    pol: &Policy,
    side: Side,
    agent: usize,
    other: usize,
) -> f64 {
    let exp = exposures(inst, pol);
    let pair = inst.pair_probs();
    match side {
        Side::Left => {
            assert!(agent < inst.n() && other < inst.n(), "left agent index out of range");
            (0..inst.m())
                .map(|j| pair[[agent, j]] * exp.left[[agent, j]] * exp.right[[j, other]])
                .sum()
        }
        Side::Right => {
            assert!(agent < inst.m() && other < inst.m(), "right agent index out of range");
            (0..inst.n())
                .map(|i| pair[[i, agent]] * exp.right[[agent, i]] * exp.left[[i, other]])
                .sum()
        }
    }
}

fn opportunity_matrices(inst: &Instance, exp: &Exposures) -> (Array2<f64>, Array2<f64>) {
    let pair = inst.pair_probs();
    // o1[(i, i')] = utility agent i gets from i''s opportunity
    let weighted_left = pair * &exp.left; // n x m
    let o1 = weighted_left.dot(&exp.right); // n x n
    let weighted_right = (pair * &exp.right.t()).reversed_axes(); // m x n
    let o2 = weighted_right.dot(&exp.left); // m x m
    (o1, o2)
}

/// Ordered envy pairs per side: (i, i') with i obtaining strictly more than
/// `envy_tol` extra utility from i''s recommendation opportunities.
pub fn envy_counts(inst: &Instance, pol: &Policy, envy_tol: f64) -> (usize, usize) {
    let exp = exposures(inst, pol);
    let (o1, o2) = opportunity_matrices(inst, &exp);
    (count_envy(&o1, envy_tol), count_envy(&o2, envy_tol))
}

fn count_envy(opp: &Array2<f64>, tol: f64) -> usize {
    let d = opp.nrows();
    let mut count = 0;
    for i in 0..d {
        let own = opp[[i, i]];
        for other in 0..d {
            if other != i && opp[[i, other]] > own + tol {
                count += 1;
            }
        }
    }
    count
}

/// Gini index of a nonnegative utility vector: 0 at perfect equality,
/// (d-1)/d for a one-hot vector. Returns 0 for an all-zero vector.
pub fn gini(utils: &[f64]) -> f64 {
    let d = utils.len();
    if d == 0 {
        return 0.0;
    }
    let total: f64 = utils.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted = utils.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("gini: utilities must not be NaN"));
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(idx, &x)| (2.0 * (idx as f64 + 1.0) - d as f64 - 1.0) * x)
        .sum();
    weighted / (d as f64 * total)
}

/// True when `new` is at least `old` everywhere (within `tol`) and strictly
/// better than `old + tol` somewhere.
pub fn pareto_dominates(new: &[f64], old: &[f64], tol: f64) -> bool {
    assert_eq!(new.len(), old.len(), "pareto_dominates: length mismatch");
    let all_geq = new.iter().zip(old).all(|(&a, &b)| a >= b - tol);
    let some_gt = new.iter().zip(old).any(|(&a, &b)| a > b + tol);
    all_geq && some_gt
}

/// Summary metrics of a policy on an instance.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub expected_matches: f64,
    pub left_utilities: Vec<f64>,
    pub right_utilities: Vec<f64>,
    pub left_envy: usize,
    pub right_envy: usize,
    pub gini_left: f64,
    pub gini_right: f64,
    pub nsw_log_left: f64,
    pub nsw_log_right: f64,
}

impl MetricsReport {
    pub fn compute(inst: &Instance, pol: &Policy, envy_tol: f64) -> Self {
        let exp = exposures(inst, pol);
        let (u, v) = utilities_from(inst, &exp);
        let (o1, o2) = opportunity_matrices(inst, &exp);
        MetricsReport {
            expected_matches: u.sum(),
            gini_left: gini(u.as_slice().unwrap()),
            gini_right: gini(v.as_slice().unwrap()),
            nsw_log_left: nsw_log_of(&u),
            nsw_log_right: nsw_log_of(&v),
            left_envy: count_envy(&o1, envy_tol),
            right_envy: count_envy(&o2, envy_tol),
            left_utilities: u.to_vec(),
            right_utilities: v.to_vec(),
        }
    }
}

/// Column order of one result row; `lambda` is empty for file-based
/// instances with unknown generation parameters.
pub const REPORT_CSV_HEADER: &str =
    "method,seed,lambda,expected_matches,left_envy,right_envy,gini_left,gini_right,wall_time_s,status";

/// One CSV row in [`REPORT_CSV_HEADER`] order.
pub fn report_csv_row(
    method: &str,
    seed: u64,
    lambda: Option<f64>,
    report: &MetricsReport,
    wall_time_s: f64,
) -> String {
    let lambda = lambda.map_or_else(String::new, |l| l.to_string());
    format!(
        "{method},{seed},{lambda},{},{},{},{},{},{},ok",
        report.expected_matches,
        report.left_envy,
        report.right_envy,
        report.gini_left,
        report.gini_right,
        wall_time_s
    )
}

/// A row for a run cell that failed (for example Sinkhorn overflow): metric
/// cells are empty and the status column carries the flag.
pub fn failed_csv_row(method: &str, seed: u64, lambda: Option<f64>, wall_time_s: f64) -> String {
    let lambda = lambda.map_or_else(String::new, |l| l.to_string());
    format!("{method},{seed},{lambda},,,,,,{wall_time_s},failed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExaminationModel, Instance, Policy};
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The 2-left-agents / 1-right-agent market used across welfare tests:
    /// e(k) = 1/k with threshold 2, p1 = (1, 1)^T, p2 = (1, 1 - eps).
    pub(crate) fn example_instance(eps: f64) -> Instance {
        Instance::new(
            arr2(&[[1.0], [1.0]]),
            arr2(&[[1.0, 1.0 - eps]]),
            ExaminationModel::inverse_rank().with_threshold(2),
        )
        .unwrap()
    }

    /// The welfare-optimal policy for that market: both left agents list the
    /// single right agent; the right agent lists agent 1 first.
    pub(crate) fn example_optimal_policy() -> Policy {
        Policy::from_rankings(&[vec![0], vec![0]], &[vec![0, 1]]).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
        let p1 = Array2::from_shape_fn((n, m), |_| rng.gen::<f64>());
        let p2 = Array2::from_shape_fn((m, n), |_| rng.gen::<f64>());
        Instance::new(p1, p2, ExaminationModel::inverse_log()).unwrap()
    }

    fn random_policy(rng: &mut ChaCha8Rng, inst: &Instance) -> Policy {
        // random convex combination of permutation matrices is doubly stochastic
        let mut pol = Policy::uniform(inst);
        let mix = |rng: &mut ChaCha8Rng, mat: &mut Array2<f64>| {
            let d = mat.nrows();
            let mut perm: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let w = rng.gen_range(0.1..0.9);
            *mat *= 1.0 - w;
            for (r, &c) in perm.iter().enumerate() {
                mat[[r, c]] += w;
            }
        };
        for ai in &mut pol.a {
            mix(rng, ai);
        }
        for bj in &mut pol.b {
            mix(rng, bj);
        }
        pol
    }

    /// Quadruple-loop evaluation of U straight from the definition.
    fn utilities_brute(inst: &Instance, pol: &Policy) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (inst.n(), inst.m());
        let em = inst.exam_left();
        let en = inst.exam_right();
        let pair = inst.pair_probs();
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..n {
                        let w = pair[[i, j]] * em[k] * en[l] * pol.a[i][[j, k]] * pol.b[j][[i, l]];
                        u[i] += w;
                        v[j] += w;
                    }
                }
            }
        }
        (u, v)
    }

    #[test]
    fn example_utilities_optimal_policy() {
        let inst = example_instance(0.5);
        let pol = example_optimal_policy();
        let (u, v) = utilities(&inst, &pol);
        assert!((u[0] - 1.0).abs() < 1e-12);
        assert!((u[1] - 0.25).abs() < 1e-12);
        assert!((v[0] - 1.25).abs() < 1e-12);
        assert!((social_welfare(&inst, &pol) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn example_utilities_uniform_policy() {
        let inst = example_instance(0.5);
        let pol = Policy::uniform(&inst);
        let (u, _) = utilities(&inst, &pol);
        assert!((u[0] - 0.75).abs() < 1e-12);
        assert!((u[1] - 0.375).abs() < 1e-12);
        assert!((social_welfare(&inst, &pol) - 1.125).abs() < 1e-12);
    }

    #[test]
    fn zero_preferences_zero_utilities() {
        let inst = Instance::new(
            Array2::zeros((2, 2)),
            Array2::from_elem((2, 2), 0.5),
            ExaminationModel::inverse_log(),
        )
        .unwrap();
        let (u, v) = utilities(&inst, &Policy::uniform(&inst));
        assert!(u.iter().all(|&x| x == 0.0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn utilities_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 3, 3);
            let pol = random_policy(&mut rng, &inst);
            let (u, v) = utilities(&inst, &pol);
            let (ub, vb) = utilities_brute(&inst, &pol);
            for i in 0..3 {
                assert!((u[i] - ub[i]).abs() < 1e-12);
                assert!((v[i] - vb[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn utility_sums_agree_on_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let m = rng.gen_range(1..6);
            let inst = random_instance(&mut rng, n, m);
            let pol = random_policy(&mut rng, &inst);
            let (u, v) = utilities(&inst, &pol);
            let sw = social_welfare(&inst, &pol);
            assert!((u.sum() - v.sum()).abs() < 1e-6);
            assert!((u.sum() - sw).abs() < 1e-6);
        }
    }

    #[test]
    fn nsw_log_values() {
        let inst = example_instance(0.5);
        let pol = example_optimal_policy();
        // U = (1, 0.25): log 1 + log 0.25
        assert!((nsw_log(&inst, &pol, Side::Left) - (-1.386_294_361_119_890_6)).abs() < 1e-9);

        let ones = Array1::from_elem(4, 1.0);
        assert_eq!(nsw_log_of(&ones), 0.0);
        let with_zero = Array1::from_vec(vec![1.0, 0.0]);
        assert_eq!(nsw_log_of(&with_zero), f64::NEG_INFINITY);
    }

    #[test]
    fn alpha_sw_values() {
        let inst = example_instance(0.5);
        let pol = example_optimal_policy();
        // U = (1, 0.25); alpha = 1 is plain social welfare of that side
        assert!((alpha_sw(&inst, &pol, Side::Left, 1.0) - 1.25).abs() < 1e-12);
        // single utility 1.25 at alpha = 0.5: (1/0.5) * sqrt(1.25)
        assert!((alpha_sw(&inst, &pol, Side::Right, 0.5) - 2.0 * 1.25f64.sqrt()).abs() < 1e-12);

        // equal utilities u give d * u^alpha / alpha; with u = 1 that is d / alpha
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let inst2 = random_instance(&mut rng, 3, 3);
        let pol2 = Policy::uniform(&inst2);
        let (u, _) = utilities(&inst2, &pol2);
        for alpha in [0.2, 0.7, 1.0] {
            let expect = u.iter().map(|&x| x.powf(alpha)).sum::<f64>() / alpha;
            assert!((alpha_sw(&inst2, &pol2, Side::Left, alpha) - expect).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "alpha must lie in (0, 1]")]
    fn alpha_sw_rejects_out_of_range() {
        let inst = example_instance(0.5);
        alpha_sw(&inst, &Policy::uniform(&inst), Side::Left, 1.5);
    }

    #[test]
    fn alpha_sw_approaches_log_nsw() {
        // ((alpha * W) - n) / alpha -> sum of log utilities as alpha -> 0
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 4, 4);
        let pol = Policy::uniform(&inst);
        let log_sum = nsw_log(&inst, &pol, Side::Left);
        assert!(log_sum.is_finite());
        for alpha in [1e-3, 1e-4] {
            let w = alpha_sw(&inst, &pol, Side::Left, alpha);
            let approx = (alpha * w - inst.n() as f64) / alpha;
            assert!(
                ((approx - log_sum) / log_sum).abs() < 1e-2,
                "alpha={alpha}: {approx} vs {log_sum}"
            );
        }
    }

    #[test]
    fn opportunity_utility_example() {
        let inst = example_instance(0.5);
        let pol = example_optimal_policy();
        // agent 2's own opportunity is position 2: (1 - eps) / 2
        assert!((opportunity_utility(&inst, &pol, Side::Left, 1, 1) - 0.25).abs() < 1e-12);
        // from agent 1's opportunity it would get 1 - eps
        assert!((opportunity_utility(&inst, &pol, Side::Left, 1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn opportunity_uniform_policy_identical_across_agents() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instance(&mut rng, 4, 3);
        let pol = Policy::uniform(&inst);
        for i in 0..4 {
            let own = opportunity_utility(&inst, &pol, Side::Left, i, i);
            for other in 0..4 {
                let o = opportunity_utility(&inst, &pol, Side::Left, i, other);
                assert!((o - own).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn opportunity_diagonal_equals_utinterest() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 3, 3);
            let pol = random_policy(&mut rng, &inst);
            let (u, v) = utilities(&inst, &pol);
            for i in 0..3 {
                assert!((opportunity_utility(&inst, &pol, Side::Left, i, i) - u[i]).abs() < 1e-10);
                assert!((opportunity_utility(&inst, &pol, Side::Right, i, i) - v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn opportunity_matches_row_swap_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = random_instance(&mut rng, 3, 3);
        let pol = random_policy(&mut rng, &inst);
        for i in 0..3 {
            for other in 0..3 {
                // swap agent i's rows for agent other's in every B_j
                let mut swapped = pol.clone();
                for bj in &mut swapped.b {
                    let other_row = bj.row(other).to_owned();
                    bj.row_mut(i).assign(&other_row);
                }
                let (u_swapped, _) = utilities(&inst, &swapped);
                let o = opportunity_utility(&inst, &pol, Side::Left, i, other);
                assert!((o - u_swapped[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn envy_example_and_uniform() {
        let inst = example_instance(0.5);
        assert_eq!(envy_counts(&inst, &example_optimal_policy(), 1e-6), (1, 0));
        assert_eq!(envy_counts(&inst, &Policy::uniform(&inst), 1e-6), (0, 0));
    }

    #[test]
    fn uniform_policy_is_envy_free_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.gen_range(1..6);
            let m = rng.gen_range(1..6);
            let inst = random_instance(&mut rng, n, m);
            assert_eq!(envy_counts(&inst, &Policy::uniform(&inst), 1e-6), (0, 0));
        }
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[2.5, 2.5, 2.5]), 0.0);
        assert!((gini(&[3.0, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(gini(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn gini_matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let utils: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() * 10.0).collect();
        let n = utils.len() as f64;
        let total: f64 = utils.iter().sum();
        let mut double_sum = 0.0;
        for &a in &utils {
            for &b in &utils {
                double_sum += (a - b).abs();
            }
        }
        let oracle = double_sum / (2.0 * n * total);
        assert!((gini(&utils) - oracle).abs() < 1e-10);
    }

    #[test]
    fn gini_scale_invariant_and_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let utils: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let scaled: Vec<f64> = utils.iter().map(|&x| 37.5 * x).collect();
        assert!((gini(&utils) - gini(&scaled)).abs() < 1e-10);

        for n in [2usize, 5, 9] {
            let mut one_hot = vec![0.0; n];
            one_hot[n / 2] = 4.2;
            assert!((gini(&one_hot) - (n as f64 - 1.0) / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn pareto_dominance_cases() {
        assert!(pareto_dominates(&[1.0, 0.0], &[0.5, 0.0], 1e-9));
        assert!(!pareto_dominates(&[1.0, 1.0], &[1.0, 1.0], 1e-9));
        assert!(!pareto_dominates(&[1.0, 0.0], &[0.0, 1.0], 1e-9));
    }

    #[test]
    fn report_row_has_stable_schema() {
        let inst = example_instance(0.5);
        let report = MetricsReport::compute(&inst, &example_optimal_policy(), 1e-6);
        assert!((report.expected_matches - 1.25).abs() < 1e-12);
        assert_eq!((report.left_envy, report.right_envy), (1, 0));
        let row = report_csv_row("sw_exact", 3, Some(0.8), &report, 0.25);
        assert_eq!(row.split(',').count(), REPORT_CSV_HEADER.split(',').count());
        assert!(row.starts_with("sw_exact,3,0.8,1.25,1,0,"));
        assert!(row.ends_with(",ok"));
        let failed = failed_csv_row("nsw_sinkhorn", 0, None, 0.1);
        assert_eq!(failed.split(',').count(), REPORT_CSV_HEADER.split(',').count());
        assert!(failed.ends_with(",failed"));
    }

    #[test]
    fn report_totals_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let inst = random_instance(&mut rng, 5, 4);
        let pol = random_policy(&mut rng, &inst);
        let report = MetricsReport::compute(&inst, &pol, 1e-6);
        let left_sum: f64 = report.left_utilities.iter().sum();
        let right_sum: f64 = report.right_utilities.iter().sum();
        assert!((left_sum - report.expected_matches).abs() < 1e-6);
        assert!((right_sum - report.expected_matches).abs() < 1e-6);
        assert!(report.gini_left >= 0.0 && report.gini_left < 1.0);
        assert!(report.gini_right >= 0.0 && report.gini_right < 1.0);
    }
}
