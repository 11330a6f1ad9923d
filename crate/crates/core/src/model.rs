//! Market model: agents, preference probabilities, examination weights and
//! doubly stochastic recommendation policies.

use std::fmt;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Which side of the market an agent belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// Position-discount family for the examination model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExamKind {
    /// e(k) = 1 / log2(k + 1)
    InverseLog,
    /// e(k) = 1 / k
    InverseRank,
}

impl ExamKind {
    fn weight(self, k: usize) -> f64 {
        match self {
            ExamKind::InverseLog => 1.0 / ((k + 1) as f64).log2(),
            ExamKind::InverseRank => 1.0 / k as f64,
        }
    }
}

impl std::str::FromStr for ExamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" | "inverse_log" => Ok(ExamKind::InverseLog),
            "inv" | "inverse_rank" => Ok(ExamKind::InverseRank),
            other => Err(Error::InvalidConfig(format!(
                "unknown examination kind {other:?} (expected \"log\" or \"inv\")"
            ))),
        }
    }
}

impl fmt::Display for ExamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExamKind::InverseLog => write!(f, "log"),
            ExamKind::InverseRank => write!(f, "inv"),
        }
    }
}

/// Examination model e(k): non-increasing position weights, zero beyond the
/// threshold. A threshold of `None` means no cutoff, i.e. the threshold
/// equals the list length wherever the model is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExaminationModel {
    pub kind: ExamKind,
    pub threshold: Option<usize>,
}

impl ExaminationModel {
    pub fn new(kind: ExamKind, threshold: Option<usize>) -> Result<Self> {
        if threshold == Some(0) {
            return Err(Error::InvalidConfig(
                "examination threshold must be at least 1".into(),
            ));
        }
        Ok(Self { kind, threshold })
    }

    pub fn inverse_log() -> Self {
        Self { kind: ExamKind::InverseLog, threshold: None }
    }

    pub fn inverse_rank() -> Self {
        Self { kind: ExamKind::InverseRank, threshold: None }
    }

    pub fn with_threshold(self, k: usize) -> Self {
        Self { threshold: Some(k), ..self }
    }

    /// Examination weights `[e(1), ..., e(d)]` for a list of length `d`.
    pub fn vector(&self, d: usize) -> Array1<f64> {
        assert!(d >= 1, "examination vector length must be at least 1");
        let cutoff = self.threshold.unwrap_or(d);
        Array1::from_iter((1..=d).map(|k| if k <= cutoff { self.kind.weight(k) } else { 0.0 }))
    }
}

/// A two-sided market: `n` left agents, `m` right agents, estimated
/// preference probabilities for both directions and an examination model.
///
/// `p1` is n x m (left prefers right), `p2` is m x n (right prefers left).
/// The derived pairwise match probability is `p1[i][j] * p2[j][i]`.
#[derive(Debug, Clone)]
pub struct Instance {
    p1: Array2<f64>,
    p2: Array2<f64>,
    pair: Array2<f64>,
    exam: ExaminationModel,
}

impl Instance {
    pub fn new(p1: Array2<f64>, p2: Array2<f64>, exam: ExaminationModel) -> Result<Self> {
        let (n, m) = p1.dim();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInstance("both sides must be non-empty".into()));
        }
        if p2.dim() != (m, n) {
            return Err(Error::InvalidInstance(format!(
                "p1 is {n}x{m} but p2 is {}x{} (expected {m}x{n})",
                p2.nrows(),
                p2.ncols()
            )));
        }
        for (name, mat) in [("p1", &p1), ("p2", &p2)] {
            for ((r, c), &v) in mat.indexed_iter() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInstance(format!(
                        "{name}[{r}][{c}] = {v} is outside [0, 1]"
                    )));
                }
            }
        }
        let mut pair = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                pair[[i, j]] = p1[[i, j]] * p2[[j, i]];
            }
        }
        Ok(Self { p1, p2, pair, exam })
    }

    pub fn n(&self) -> usize {
        self.p1.nrows()
    }

    pub fn m(&self) -> usize {
        self.p1.ncols()
    }

    pub fn p1(&self) -> &Array2<f64> {
        &self.p1
    }

    pub fn p2(&self) -> &Array2<f64> {
        &self.p2
    }

    /// Pairwise match probabilities p[i][j] = p1[i][j] * p2[j][i], n x m.
    pub fn pair_probs(&self) -> &Array2<f64> {
        &self.pair
    }

    pub fn exam(&self) -> &ExaminationModel {
        &self.exam
    }

    /// Examination weights for left-side lists (length m).
    pub fn exam_left(&self) -> Array1<f64> {
        self.exam.vector(self.m())
    }

    /// Examination weights for right-side lists (length n).
    pub fn exam_right(&self) -> Array1<f64> {
        self.exam.vector(self.n())
    }
}

/// A recommendation policy: one m x m doubly stochastic matrix per left
/// agent and one n x n per right agent. `a[i][(j, k)]` is the probability
/// that right agent `j` occupies position `k` in left agent `i`'s list.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub a: Vec<Array2<f64>>,
    pub b: Vec<Array2<f64>>,
}

/// One doubly-stochasticity violation found by [`Policy::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyViolation {
    pub side: Side,
    pub agent: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    MatrixCount { expected: usize, got: usize },
    Shape { expected: usize, rows: usize, cols: usize },
    NegativeEntry { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColSum { col: usize, sum: f64 },
}

impl fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.side {
            Side::Left => "A",
            Side::Right => "B",
        };
        match &self.kind {
            ViolationKind::MatrixCount { expected, got } => {
                write!(f, "{name}: expected {expected} matrices, got {got}")
            }
            ViolationKind::Shape { expected, rows, cols } => write!(
                f,
                "{name}{}: expected {expected}x{expected}, got {rows}x{cols}",
                self.agent + 1
            ),
            ViolationKind::NegativeEntry { row, col, value } => {
                write!(f, "{name}{}: entry ({row}, {col}) = {value} is negative", self.agent + 1)
            }
            ViolationKind::RowSum { row, sum } => {
                write!(f, "{name}{}: row {row} sums to {sum}", self.agent + 1)
            }
            ViolationKind::ColSum { col, sum } => {
                write!(f, "{name}{}: column {col} sums to {sum}", self.agent + 1)
            }
        }
    }
}

impl Policy {
    /// The uniform policy: every entry of each A_i is 1/m, of each B_j is 1/n.
    pub fn uniform(inst: &Instance) -> Self {
        let (n, m) = (inst.n(), inst.m());
        Self {
            a: vec![Array2::from_elem((m, m), 1.0 / m as f64); n],
            b: vec![Array2::from_elem((n, n), 1.0 / n as f64); m],
        }
    }

    /// Deterministic policy from rankings. `left_ranks[i][k]` is the right
    /// agent placed at position `k` of left agent `i`'s list; analogously for
    /// `right_ranks`. Every ranking must be a bijection.
    pub fn from_rankings(left_ranks: &[Vec<usize>], right_ranks: &[Vec<usize>]) -> Result<Self> {
        let n = left_ranks.len();
        let m = right_ranks.len();
        let a = left_ranks
            .iter()
            .enumerate()
            .map(|(i, r)| {
                permutation_matrix(r, m)
                    .ok_or(Error::NonBijectiveRanking { side: Side::Left, agent: i })
            })
            .collect::<Result<Vec<_>>>()?;
        let b = right_ranks
            .iter()
            .enumerate()
            .map(|(j, r)| {
                permutation_matrix(r, n)
                    .ok_or(Error::NonBijectiveRanking { side: Side::Right, agent: j })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { a, b })
    }

    /// Checks dimensions, nonnegativity and row/column sums against `inst`.
    /// Returns every violation found; an empty vector means the policy is a
    /// valid family of doubly stochastic matrices within `tol`.
    pub fn validate(&self, inst: &Instance, tol: f64) -> Vec<PolicyViolation> {
        let mut out = Vec::new();
        let sides = [
            (Side::Left, &self.a, inst.n(), inst.m()),
            (Side::Right, &self.b, inst.m(), inst.n()),
        ];
        for (side, mats, count, dim) in sides {
            if mats.len() != count {
                out.push(PolicyViolation {
                    side,
                    agent: 0,
                    kind: ViolationKind::MatrixCount { expected: count, got: mats.len() },
                });
                continue;
            }
            for (agent, mat) in mats.iter().enumerate() {
                if mat.dim() != (dim, dim) {
                    out.push(PolicyViolation {
                        side,
                        agent,
                        kind: ViolationKind::Shape {
                            expected: dim,
                            rows: mat.nrows(),
                            cols: mat.ncols(),
                        },
                    });
                    continue;
                }
                for ((r, c), &v) in mat.indexed_iter() {
                    if v < -tol {
                        out.push(PolicyViolation {
                            side,
                            agent,
                            kind: ViolationKind::NegativeEntry { row: r, col: c, value: v },
                        });
                    }
                }
                for (r, row) in mat.rows().into_iter().enumerate() {
                    let sum = row.sum();
                    if (sum - 1.0).abs() > tol {
                        out.push(PolicyViolation {
                            side,
                            agent,
                            kind: ViolationKind::RowSum { row: r, sum },
                        });
                    }
                }
                for (c, col) in mat.columns().into_iter().enumerate() {
                    let sum = col.sum();
                    if (sum - 1.0).abs() > tol {
                        out.push(PolicyViolation {
                            side,
                            agent,
                            kind: ViolationKind::ColSum { col: c, sum },
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self, inst: &Instance, tol: f64) -> bool {
        self.validate(inst, tol).is_empty()
    }
}

fn permutation_matrix(ranking: &[usize], d: usize) -> Option<Array2<f64>> {
    if ranking.len() != d {
        return None;
    }
    let mut seen = vec![false; d];
    let mut mat = Array2::zeros((d, d));
    for (pos, &cand) in ranking.iter().enumerate() {
        if cand >= d || seen[cand] {
            return None;
        }
        seen[cand] = true;
        mat[[cand, pos]] = 1.0;
    }
    Some(mat)
}
