//! Experiment harness for two-sided matching recommendation policies:
//! generate synthetic markets, run ranking baselines and welfare/fairness
//! optimizers over seeds, sweep parameters, and emit tidy per-seed CSV.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure (partial
//! results are still written).

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{examination_from, FileConfig, RunSpec, Seeds};
use matchfair::datagen::{generate, GenConfig};
use matchfair::io::{load_instance, save_instance, InstanceMeta};
use matchfair::metrics::{report_csv_row, MetricsReport, REPORT_CSV_HEADER};
use runner::{run_cells, Axis};

#[derive(Parser)]
#[command(name = "matchfair", version, about = "Two-sided matching policy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance directory (p1.csv, p2.csv, instance.toml)
    Generate(GenerateArgs),
    /// Run the methods of a config over its seeds and write one CSV row per cell
    Run(RunArgs),
    /// Run a config once per value of a swept parameter
    Sweep(SweepArgs),
    /// Compute metrics for one method on a stored instance directory
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory for the instance files
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    lambda: f64,
    /// Examination kind: "log" or "inv"
    #[arg(long, default_value = "log")]
    exam: String,
    /// Examination cutoff; omitted = full list length
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Overrides {
    /// Output CSV path (default: output.path from the config, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds, e.g. "0..9" (inclusive) or "0,2,5"
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated method list
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    exam: Option<String>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// "exact" or "sinkhorn"
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    converge_tol: Option<f64>,
    #[arg(long)]
    log_domain: Option<bool>,
    #[arg(long)]
    envy_tol: Option<f64>,
    #[arg(long)]
    sinkhorn_max_iters: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut FileConfig) {
        if let Some(out) = &self.out {
            cfg.output.path = Some(out.clone());
        }
        if let Some(seeds) = &self.seeds {
            cfg.run.seeds = Seeds::Text(seeds.clone());
        }
        if let Some(methods) = &self.methods {
            cfg.run.methods = methods.clone();
        }
        if let Some(lambda) = self.lambda {
            cfg.instance.lambda = Some(lambda);
        }
        if let Some(n) = self.n {
            cfg.instance.n = Some(n);
        }
        if let Some(m) = self.m {
            cfg.instance.m = Some(m);
        }
        if let Some(exam) = &self.exam {
            cfg.instance.exam = exam.clone();
        }
        if let Some(threshold) = self.threshold {
            cfg.instance.threshold = Some(threshold);
        }
        if let Some(sigma) = self.sigma {
            cfg.run.sigma = sigma;
        }
        if let Some(oracle) = &self.oracle {
            cfg.optim.oracle = oracle.clone();
        }
        if let Some(tau) = self.tau {
            cfg.sinkhorn.tau = tau;
        }
        if let Some(alpha) = self.alpha {
            cfg.optim.alpha = Some(alpha);
        }
        if let Some(eta) = self.eta {
            cfg.optim.eta = eta;
        }
        if let Some(iters) = self.max_iters {
            cfg.optim.max_iters = iters;
        }
        if let Some(tol) = self.converge_tol {
            cfg.optim.converge_tol = tol;
        }
        if let Some(log_domain) = self.log_domain {
            cfg.sinkhorn.log_domain = log_domain;
        }
        if let Some(envy_tol) = self.envy_tol {
            cfg.run.envy_tol = envy_tol;
        }
        if let Some(iters) = self.sinkhorn_max_iters {
            cfg.sinkhorn.max_iters = iters;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML run specification
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Swept parameter: lambda, alpha, tau, sigma or size
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values, e.g. "0.0,0.2,0.4"
    #[arg(long)]
    values: String,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Instance directory written by `generate`
    #[arg(long)]
    instance: PathBuf,
    /// One method name
    #[arg(long)]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let exam = examination_from(&args.exam, args.threshold)?;
    let cfg = GenConfig { n: args.n, m: args.m, lambda: args.lambda, exam, seed: args.seed };
    let inst = generate(&cfg)?;
    let meta = InstanceMeta {
        n: args.n,
        m: args.m,
        lambda: Some(args.lambda),
        seed: Some(args.seed),
        exam: args.exam.clone(),
        threshold: args.threshold,
    };
    save_instance(&args.out, &inst, &meta)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut cfg: FileConfig =
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
    overrides.apply(&mut cfg);
    RunSpec::from_file_config(&cfg)
}

fn emit(spec_out: Option<PathBuf>, csv: &str, failures: &[String]) -> Result<ExitCode> {
    match spec_out {
        Some(path) => {
            std::fs::write(&path, csv).with_context(|| format!("cannot write {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in failures {
            eprintln!("failed cell: {failure}");
        }
        Ok(ExitCode::from(2))
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let spec = load_config(&args.config, &args.overrides)?;
    let outcome = run_cells(&spec, None)?;
    emit(spec.out.clone(), &outcome.csv, &outcome.failures)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let spec = load_config(&args.config, &args.overrides)?;
    let axis = Axis::parse(&args.axis)?;
    let values: Vec<f64> = if args.values.trim().is_empty() {
        Vec::new()
    } else {
        args.values
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad axis value {v:?}")))
            .collect::<Result<_>>()?
    };
    let outcome = run_cells(&spec, Some((axis, &values)))?;
    emit(spec.out.clone(), &outcome.csv, &outcome.failures)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let (inst, meta) = load_instance(&args.instance)?;
    let mut cfg = FileConfig::default();
    cfg.instance.source = "files".into();
    cfg.instance.p1 = Some(args.instance.join("p1.csv"));
    cfg.instance.p2 = Some(args.instance.join("p2.csv"));
    cfg.instance.exam = meta.exam.clone();
    cfg.instance.threshold = meta.threshold;
    cfg.run.methods = vec![args.method.clone()];
    if let Some(seed) = meta.seed {
        cfg.run.seeds = Seeds::One(seed);
    }
    args.overrides.apply(&mut cfg);
    let spec = RunSpec::from_file_config(&cfg)?;

    let method = spec.methods[0];
    let seed = spec.seeds[0];
    let started = std::time::Instant::now();
    let policy = {
        use matchfair::baselines::{iterlp_policy, naive_policy, prod_policy, tu_policy};
        use matchfair::optim::alternating_maximize;
        match method {
            config::MethodKind::Naive => naive_policy(&inst),
            config::MethodKind::Prod => prod_policy(&inst),
            config::MethodKind::Tu => tu_policy(&inst, &spec.tu)?,
            config::MethodKind::IterLp => iterlp_policy(&inst),
            _ => {
                let ocfg = spec.optim_config(method, spec.optim.alpha, None)?;
                alternating_maximize(&inst, &ocfg)?.0
            }
        }
    };
    let wall = started.elapsed().as_secs_f64();
    let report = MetricsReport::compute(&inst, &policy, spec.envy_tol);
    let label = config::method_label(method, spec.optim.alpha, spec.oracle_kind);
    let csv = format!(
        "{REPORT_CSV_HEADER}\n{}\n",
        report_csv_row(&label, seed, meta.lambda, &report, wall)
    );
    emit(args.out.or_else(|| spec.out.clone()), &csv, &[])
}
