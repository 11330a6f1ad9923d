//! Alternating Frank-Wolfe maximization of social welfare, log Nash social
//! welfare and alpha-social welfare over doubly stochastic policies.
//!
//! Each outer iteration linearizes the objective at the current policy,
//! solves one linear maximization per agent over its own Birkhoff polytope
//! (exactly via the assignment oracle or approximately via Sinkhorn) and
//! takes a convex-combination step. The A-step maximizes the right-side
//! function F2 and the B-step the left-side function F1, in that order.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::birkhoff::{gain_to_cost, linear_max_exact, sinkhorn_warm, SinkhornConfig, SinkhornState};
use crate::error::{Error, Result};
use crate::metrics::{self, UTILITY_FLOOR};
use crate::model::{Instance, Policy, Side};

/// Objective family for the alternating maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Total expected matches; F1 = F2 = SW.
    Sw,
    /// Log Nash social welfare; F1 = log NSW_1, F2 = log NSW_2.
    Nsw,
    /// alpha-social welfare for alpha in (0, 1); F1 = W_1^alpha, F2 = W_2^alpha.
    AlphaSw(f64),
}

impl Objective {
    /// Per-agent gradient scaling derived from the opposite-side utility:
    /// 1 for SW, 1/u for NSW, u^(alpha-1) for alpha-SW. Utilities are
    /// floored at [`UTILITY_FLOOR`] before inversion.
    fn scale(self, util: f64) -> f64 {
        match self {
            Objective::Sw => 1.0,
            Objective::Nsw => 1.0 / util.max(UTILITY_FLOOR),
            Objective::AlphaSw(alpha) => util.max(UTILITY_FLOOR).powf(alpha - 1.0),
        }
    }

    fn value(self, utils: &Array1<f64>) -> f64 {
        match self {
            Objective::Sw => utils.sum(),
            Objective::Nsw => metrics::nsw_log_of(utils),
            Objective::AlphaSw(alpha) => {
                utils.iter().map(|&x| x.powf(alpha)).sum::<f64>() / alpha
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Objective::Sw => "sw".into(),
            Objective::Nsw => "nsw".into(),
            Objective::AlphaSw(alpha) => format!("alpha_sw_{alpha}"),
        }
    }
}

/// Which linear-maximization oracle solves the per-agent subproblems.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Exact,
    Sinkhorn(SinkhornConfig),
}

/// Step size schedule for the Frank-Wolfe update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// eta_t = 2 / (t + 2)
    Diminishing,
}

impl StepSchedule {
    fn eta(self, t: usize) -> f64 {
        match self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Diminishing => 2.0 / (t as f64 + 2.0),
        }
    }
}

/// Starting policy.
#[derive(Debug, Clone)]
pub enum Init {
    Uniform,
    Given(Policy),
}

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub objective: Objective,
    pub oracle: Oracle,
    pub step: StepSchedule,
    pub max_outer_iters: usize,
    /// Convergence is declared (and the loop stopped) once no agent's
    /// expected matches changed by more than this between consecutive outer
    /// iterations.
    pub converge_tol: f64,
    pub init: Init,
    /// Recorded for bookkeeping; the optimizer itself is deterministic.
    pub seed: u64,
}

impl OptimConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            oracle: Oracle::Exact,
            step: StepSchedule::Constant(0.1),
            max_outer_iters: 100,
            converge_tol: 0.01,
            init: Init::Uniform,
            seed: 0,
        }
    }

    pub fn with_oracle(mut self, oracle: Oracle) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Objective::AlphaSw(alpha) = self.objective {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha must lie in (0, 1), got {alpha}; use the SW objective for alpha = 1"
                )));
            }
        }
        if let StepSchedule::Constant(eta) = self.step {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "constant step size must lie in (0, 1], got {eta}"
                )));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be at least 1".into()));
        }
        if self.converge_tol < 0.0 {
            return Err(Error::InvalidConfig("converge_tol must be nonnegative".into()));
        }
        if let Oracle::Sinkhorn(cfg) = &self.oracle {
            cfg.validate()?;
        }
        Ok(())
    }
}

/// Per-iteration record of an optimization run.
#[derive(Debug, Clone, Default)]
pub struct OptimTrace {
    pub expected_matches: Vec<f64>,
    pub objective_left: Vec<f64>,
    pub objective_right: Vec<f64>,
    pub step_seconds: Vec<f64>,
    pub converged: bool,
    pub converged_iteration: Option<usize>,
    pub iterations: usize,
}

pub const TRACE_CSV_HEADER: &str = "iteration,sw,objective_left,objective_right,step_seconds";

impl OptimTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for t in 0..self.iterations {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t + 1,
                self.expected_matches[t],
                self.objective_left[t],
                self.objective_right[t],
                self.step_seconds[t]
            ));
        }
        out
    }
}

/// Gradient of the right-side function F2 with respect to left agent `i`'s
/// recommendation matrix: entry (j, k) is scale(V_j) * p_ij * e(k) *
/// sum_l e(l) B_j(i, l). For SW the result does not depend on A at all.
pub fn gradient_a(objective: Objective, inst: &Instance, pol: &Policy, i: usize) -> Array2<f64> {
    assert!(i < inst.n(), "left agent index {i} out of range");
    let exp = metrics::exposures(inst, pol);
    let (_, v) = metrics::utilities(inst, pol);
    gradient_a_from(objective, inst, &exp.right, &v, i, &inst.exam_left())
}

/// Gradient of the left-side function F1 with respect to right agent `j`'s
/// recommendation matrix: entry (i, l) is scale(U_i) * p_ij * e(l) *
/// sum_k e(k) A_i(j, k).
pub fn gradient_b(objective: Objective, inst: &Instance, pol: &Policy, j: usize) -> Array2<f64> {
    assert!(j < inst.m(), "right agent index {j} out of range");
    let exp = metrics::exposures(inst, pol);
    let (u, _) = metrics::utilities(inst, pol);
    gradient_b_from(objective, inst, &exp.left, &u, j, &inst.exam_right())
}

fn gradient_a_from(
    objective: Objective,
    inst: &Instance,
    right_exposure: &Array2<f64>,
    v: &Array1<f64>,
    i: usize,
    exam_left: &Array1<f64>,
) -> Array2<f64> {
    let m = inst.m();
    let pair = inst.pair_probs();
    let coeff =
        Array1::from_iter((0..m).map(|j| objective.scale(v[j]) * pair[[i, j]] * right_exposure[[j, i]]));
    outer(&coeff, exam_left)
}

fn gradient_b_from(
    objective: Objective,
    inst: &Instance,
    left_exposure: &Array2<f64>,
    u: &Array1<f64>,
    j: usize,
    exam_right: &Array1<f64>,
) -> Array2<f64> {
    let n = inst.n();
    let pair = inst.pair_probs();
    let coeff =
        Array1::from_iter((0..n).map(|i| objective.scale(u[i]) * pair[[i, j]] * left_exposure[[i, j]]));
    outer(&coeff, exam_right)
}

fn outer(col: &Array1<f64>, row: &Array1<f64>) -> Array2<f64> {
    let (a, b) = (col.len(), row.len());
    Array2::from_shape_fn((a, b), |(r, c)| col[r] * row[c])
}

/// Runs the alternating Frank-Wolfe maximization and returns the final
/// policy with its per-iteration trace. The returned policy is doubly
/// stochastic within 1e-6; this is checked after every iteration.
pub fn alternating_maximize(inst: &Instance, cfg: &OptimConfig) -> Result<(Policy, OptimTrace)> {
    cfg.validate()?;
    let (n, m) = (inst.n(), inst.m());
    let mut pol = match &cfg.init {
        Init::Uniform => Policy::uniform(inst),
        Init::Given(p) => {
            let viols = p.validate(inst, 1e-6);
            if !viols.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "initial policy is not doubly stochastic: {}",
                    viols[0]
                )));
            }
            p.clone()
        }
    };
    let em = inst.exam_left();
    let en = inst.exam_right();

    let mut warm_a: Vec<Option<SinkhornState>> = vec![None; n];
    let mut warm_b: Vec<Option<SinkhornState>> = vec![None; m];

    let (mut u_prev, mut v_prev) = metrics::utilities(inst, &pol);
    let mut trace = OptimTrace::default();

    for t in 1..=cfg.max_outer_iters {
        let started = Instant::now();
        let eta = cfg.step.eta(t);

        // A-step: linearize F2 at the current policy, one subproblem per left agent
        let exp = metrics::exposures(inst, &pol);
        let (_, v_now) = metrics::utilities(inst, &pol);
        let solutions: Vec<(Array2<f64>, Option<SinkhornState>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let gain = gradient_a_from(cfg.objective, inst, &exp.right, &v_now, i, &em);
                solve_subproblem(&cfg.oracle, &gain, warm_a[i].as_ref())
                    .map_err(|e| oracle_failure(t, Side::Left, i, e))
            })
            .collect::<Result<_>>()?;
        for (i, (vertex, state)) in solutions.into_iter().enumerate() {
            blend(&mut pol.a[i], &vertex, eta);
            if state.is_some() {
                warm_a[i] = state;
            }
        }

        // B-step: linearize F1 at the just-updated policy
        let exp = metrics::exposures(inst, &pol);
        let (u_now, _) = metrics::utilities(inst, &pol);
        let solutions: Vec<(Array2<f64>, Option<SinkhornState>)> = (0..m)
            .into_par_iter()
            .map(|j| {
                let gain = gradient_b_from(cfg.objective, inst, &exp.left, &u_now, j, &en);
                solve_subproblem(&cfg.oracle, &gain, warm_b[j].as_ref())
                    .map_err(|e| oracle_failure(t, Side::Right, j, e))
            })
            .collect::<Result<_>>()?;
        for (j, (vertex, state)) in solutions.into_iter().enumerate() {
            blend(&mut pol.b[j], &vertex, eta);
            if state.is_some() {
                warm_b[j] = state;
            }
        }

        let viols = pol.validate(inst, 1e-6);
        if !viols.is_empty() {
            return Err(Error::PolicyDrift { iteration: t, detail: viols[0].to_string() });
        }

        let (u, v) = metrics::utilities(inst, &pol);
        trace.expected_matches.push(u.sum());
        trace.objective_left.push(cfg.objective.value(&u));
        trace.objective_right.push(cfg.objective.value(&v));
        trace.step_seconds.push(started.elapsed().as_secs_f64());
        trace.iterations = t;

        let delta = agent_delta(&u, &u_prev).max(agent_delta(&v, &v_prev));
        u_prev = u;
        v_prev = v;
        if delta < cfg.converge_tol {
            trace.converged = true;
            trace.converged_iteration = Some(t);
            break;
        }
    }

    Ok((pol, trace))
}

fn agent_delta(now: &Array1<f64>, before: &Array1<f64>) -> f64 {
    now.iter()
        .zip(before.iter())
        .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()))
}

fn solve_subproblem(
    oracle: &Oracle,
    gain: &Array2<f64>,
    warm: Option<&SinkhornState>,
) -> Result<(Array2<f64>, Option<SinkhornState>)> {
    match oracle {
        Oracle::Exact => Ok((linear_max_exact(gain)?, None)),
        Oracle::Sinkhorn(cfg) => {
            let cost = gain_to_cost(gain)?;
            let (out, state) = sinkhorn_warm(&cost, cfg, warm)?;
            if !out.converged {
                return Err(Error::SinkhornNotConverged {
                    iterations: out.iterations,
                    deviation: out.max_marginal_deviation,
                });
            }
            Ok((out.matrix, Some(state)))
        }
    }
}

fn oracle_failure(iteration: usize, side: Side, agent: usize, source: Error) -> Error {
    match source {
        already @ Error::OracleFailure { .. } => already,
        other => Error::OracleFailure { iteration, side, agent, source: Box::new(other) },
    }
}

fn blend(current: &mut Array2<f64>, vertex: &Array2<f64>, eta: f64) {
    current.zip_mut_with(vertex, |a, &x| *a = (1.0 - eta) * *a + eta * x);
}
