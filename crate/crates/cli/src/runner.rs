//! Executes run and sweep cells in parallel and assembles the output CSV.

use std::fmt;
use std::time::Instant;

use anyhow::{bail, Result};
use rayon::prelude::*;

use matchfair::baselines::{iterlp_policy, naive_policy, prod_policy, tu_policy};
use matchfair::datagen::perturb;
use matchfair::metrics::{failed_csv_row, report_csv_row, MetricsReport, REPORT_CSV_HEADER};
use matchfair::optim::alternating_maximize;
use matchfair::{Instance, Policy};

use crate::config::{method_label, InstanceSource, MethodKind, OracleKind, RunSpec};

/// Decorrelates the perturbation stream from the generation stream that
/// uses the same user-facing seed.
const PERTURB_SEED_XOR: u64 = 0x70657274_75726221;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Lambda,
    Alpha,
    Tau,
    Sigma,
    Size,
}

impl Axis {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(match text {
            "lambda" => Axis::Lambda,
            "alpha" => Axis::Alpha,
            "tau" => Axis::Tau,
            "sigma" => Axis::Sigma,
            "size" => Axis::Size,
            other => bail!("unknown sweep axis {other:?} (expected lambda, alpha, tau, sigma, size)"),
        })
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Axis::Lambda => "lambda",
            Axis::Alpha => "alpha",
            Axis::Tau => "tau",
            Axis::Sigma => "sigma",
            Axis::Size => "size",
        };
        write!(f, "{name}")
    }
}

struct Cell {
    axis_value: Option<f64>,
    method: MethodKind,
    seed: u64,
}

pub struct Outcome {
    /// Full CSV text, header included.
    pub csv: String,
    /// Human-readable failure descriptions for cells that did not produce
    /// metrics; the corresponding rows carry the `failed` status.
    pub failures: Vec<String>,
}

/// Runs every (method, seed) cell of the spec. `axis` adds a sweep
/// dimension: one pass per value, with `axis,axis_value` prefix columns.
pub fn run_cells(spec: &RunSpec, axis: Option<(Axis, &[f64])>) -> Result<Outcome> {
    validate_axis(spec, axis)?;
    let mut cells = Vec::new();
    match axis {
        None => {
            for method in &spec.methods {
                for &seed in &spec.seeds {
                    cells.push(Cell { axis_value: None, method: *method, seed });
                }
            }
        }
        Some((_, values)) => {
            for &value in values {
                for method in &spec.methods {
                    for &seed in &spec.seeds {
                        cells.push(Cell { axis_value: Some(value), method: *method, seed });
                    }
                }
            }
        }
    }

    let results: Vec<(String, Option<String>)> = cells
        .par_iter()
        .map(|cell| execute_cell(spec, axis.map(|(a, _)| a), cell))
        .collect();

    let mut csv = String::new();
    match axis {
        None => {
            csv.push_str(REPORT_CSV_HEADER);
            csv.push('\n');
        }
        Some((name, _)) => {
            csv.push_str(&format!("axis,axis_value,{REPORT_CSV_HEADER}\n"));
            let _ = name;
        }
    }
    let mut failures = Vec::new();
    for (row, failure) in results {
        csv.push_str(&row);
        csv.push('\n');
        if let Some(f) = failure {
            failures.push(f);
        }
    }
    Ok(Outcome { csv, failures })
}

fn validate_axis(spec: &RunSpec, axis: Option<(Axis, &[f64])>) -> Result<()> {
    let Some((axis, values)) = axis else { return Ok(()) };
    match axis {
        Axis::Alpha => {
            if spec.methods.iter().any(|m| *m != MethodKind::AlphaSw) {
                bail!("axis \"alpha\" requires methods = [\"alpha-sw\"]");
            }
            if values.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
                bail!("alpha values must lie in (0, 1)");
            }
        }
        Axis::Tau => {
            if spec.oracle_kind != OracleKind::Sinkhorn {
                bail!("axis \"tau\" requires optim.oracle = \"sinkhorn\"");
            }
            if spec.methods.iter().any(|m| !m.is_optimization()) {
                bail!("axis \"tau\" only applies to sw, nsw and alpha-sw methods");
            }
        }
        Axis::Lambda | Axis::Size => {
            if matches!(spec.source, InstanceSource::Files { .. }) {
                bail!("axis {axis:?} needs a generated instance, not files");
            }
            if axis == Axis::Lambda && values.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
                bail!("lambda values must lie in [0, 1]");
            }
            if axis == Axis::Size && values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                bail!("size values must be positive integers (the left-side count n)");
            }
        }
        Axis::Sigma => {
            if values.iter().any(|&s| s < 0.0) {
                bail!("sigma values must be nonnegative");
            }
        }
    }
    Ok(())
}

/// Runs one cell and formats its CSV row; failures become `failed` rows.
fn execute_cell(spec: &RunSpec, axis: Option<Axis>, cell: &Cell) -> (String, Option<String>) {
    let mut lambda_override = None;
    let mut sigma = spec.sigma;
    let mut alpha = spec.optim.alpha;
    let mut tau = None;
    let mut size = None;
    if let (Some(axis), Some(value)) = (axis, cell.axis_value) {
        match axis {
            Axis::Lambda => lambda_override = Some(value),
            Axis::Sigma => sigma = value,
            Axis::Alpha => alpha = Some(value),
            Axis::Tau => tau = Some(value),
            Axis::Size => size = Some(value as usize),
        }
    }

    let label = method_label(cell.method, alpha, spec.oracle_kind);
    let result = run_method(spec, cell, lambda_override, sigma, alpha, tau, size);
    let lambda_col = lambda_override.or_else(|| spec.lambda());
    let (row, failure) = match result {
        Ok((report, wall)) => (report_csv_row(&label, cell.seed, lambda_col, &report, wall), None),
        Err(err) => {
            let message = format!("{label} seed {}: {err:#}", cell.seed);
            (failed_csv_row(&label, cell.seed, lambda_col, 0.0), Some(message))
        }
    };
    match (axis, cell.axis_value) {
        (Some(axis), Some(value)) => (format!("{axis},{value},{row}"), failure),
        _ => (row, failure),
    }
}

fn run_method(
    spec: &RunSpec,
    cell: &Cell,
    lambda_override: Option<f64>,
    sigma: f64,
    alpha: Option<f64>,
    tau: Option<f64>,
    size: Option<usize>,
) -> Result<(MetricsReport, f64)> {
    let true_instance = build_instance(spec, cell.seed, lambda_override, size)?;
    // robustness protocol: the method sees perturbed preferences, the
    // evaluation uses the true ones
    let seen_instance = if sigma > 0.0 {
        perturb(&true_instance, sigma, cell.seed ^ PERTURB_SEED_XOR)?
    } else {
        true_instance.clone()
    };

    let started = Instant::now();
    let policy = compute_policy(spec, cell.method, &seen_instance, alpha, tau)?;
    let wall = started.elapsed().as_secs_f64();

    let report = MetricsReport::compute(&true_instance, &policy, spec.envy_tol);
    Ok((report, wall))
}

fn build_instance(
    spec: &RunSpec,
    seed: u64,
    lambda_override: Option<f64>,
    size: Option<usize>,
) -> Result<Instance> {
    match (&spec.source, lambda_override, size) {
        (InstanceSource::Generate { n, m, lambda }, lam, size) => {
            let (n, m) = match size {
                // size sweeps scale both sides, keeping the configured ratio
                Some(new_n) => {
                    let ratio = *m as f64 / *n as f64;
                    (new_n, ((new_n as f64 * ratio).round() as usize).max(1))
                }
                None => (*n, *m),
            };
            let cfg = matchfair::datagen::GenConfig {
                n,
                m,
                lambda: lam.unwrap_or(*lambda),
                exam: spec.exam,
                seed,
            };
            Ok(matchfair::datagen::generate(&cfg)?)
        }
        (InstanceSource::Files { p1, p2 }, _, _) => {
            Ok(matchfair::io::load_instance_from_files(p1, p2, spec.exam)?)
        }
    }
}

fn compute_policy(
    spec: &RunSpec,
    method: MethodKind,
    inst: &Instance,
    alpha: Option<f64>,
    tau: Option<f64>,
) -> Result<Policy> {
    Ok(match method {
        MethodKind::Naive => naive_policy(inst),
        MethodKind::Prod => prod_policy(inst),
        MethodKind::Tu => tu_policy(inst, &spec.tu)?,
        MethodKind::IterLp => iterlp_policy(inst),
        MethodKind::Sw | MethodKind::Nsw | MethodKind::AlphaSw => {
            let cfg = spec.optim_config(method, alpha, tau)?;
            alternating_maximize(inst, &cfg)?.0
        }
    })
}
