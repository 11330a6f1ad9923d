//! Run specification: a TOML file with sections for the instance source,
//! the methods and seeds to run, optimizer/oracle/TU parameters and the
//! output path. Command-line flags override individual fields.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use matchfair::birkhoff::SinkhornConfig;
use matchfair::optim::{Objective, OptimConfig, Oracle, StepSchedule};
use matchfair::baselines::TuConfig;
use matchfair::ExaminationModel;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub instance: InstanceSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub sinkhorn: SinkhornSection,
    #[serde(default)]
    pub tu: TuSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    /// "generate" or "files"
    #[serde(default = "default_source")]
    pub source: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub lambda: Option<f64>,
    /// "log" or "inv"
    #[serde(default = "default_exam")]
    pub exam: String,
    /// Examination cutoff; omitted = full list length.
    pub threshold: Option<usize>,
    /// Preference matrix files for source = "files".
    pub p1: Option<PathBuf>,
    pub p2: Option<PathBuf>,
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self {
            source: default_source(),
            n: None,
            m: None,
            lambda: None,
            exam: default_exam(),
            threshold: None,
            p1: None,
            p2: None,
        }
    }
}

fn default_source() -> String {
    "generate".into()
}

fn default_exam() -> String {
    "log".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub methods: Vec<String>,
    /// "0..9" (inclusive), "0,3,7", or a list of integers.
    #[serde(default)]
    pub seeds: Seeds,
    /// Standard deviation of Gaussian preference noise. Policies are
    /// computed on the perturbed preferences; metrics use the true ones.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_envy_tol")]
    pub envy_tol: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { methods: Vec::new(), seeds: Seeds::default(), sigma: 0.0, envy_tol: default_envy_tol() }
    }
}

fn default_envy_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Text(String),
    List(Vec<u64>),
    One(u64),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::One(0)
    }
}

impl Seeds {
    pub fn parse(&self) -> Result<Vec<u64>> {
        match self {
            Seeds::One(s) => Ok(vec![*s]),
            Seeds::List(v) => {
                if v.is_empty() {
                    bail!("seed list is empty");
                }
                Ok(v.clone())
            }
            Seeds::Text(text) => parse_seed_text(text),
        }
    }
}

pub fn parse_seed_text(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().with_context(|| format!("bad seed range {text:?}"))?;
        let hi: u64 = hi.trim().parse().with_context(|| format!("bad seed range {text:?}"))?;
        if hi < lo {
            bail!("seed range {text:?} is empty");
        }
        return Ok((lo..=hi).collect());
    }
    let seeds: Vec<u64> = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSection {
    /// "exact" or "sinkhorn"
    #[serde(default = "default_oracle")]
    pub oracle: String,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// "constant" or "diminishing"
    #[serde(default = "default_step")]
    pub step: String,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_converge_tol")]
    pub converge_tol: f64,
    /// alpha used by the "alpha-sw" method.
    pub alpha: Option<f64>,
}

impl Default for OptimSection {
    fn default() -> Self {
        Self {
            oracle: default_oracle(),
            eta: default_eta(),
            step: default_step(),
            max_iters: default_max_iters(),
            converge_tol: default_converge_tol(),
            alpha: None,
        }
    }
}

fn default_oracle() -> String {
    "exact".into()
}
fn default_eta() -> f64 {
    0.1
}
fn default_step() -> String {
    "constant".into()
}
fn default_max_iters() -> usize {
    100
}
fn default_converge_tol() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_sinkhorn_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub log_domain: bool,
}

impl Default for SinkhornSection {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            max_iters: default_sinkhorn_iters(),
            stop_tol: default_stop_tol(),
            log_domain: false,
        }
    }
}

fn default_tau() -> f64 {
    200.0
}
fn default_sinkhorn_iters() -> usize {
    500
}
fn default_stop_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuSection {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tu_iters")]
    pub iters: usize,
}

impl Default for TuSection {
    fn default() -> Self {
        Self { beta: default_beta(), iters: default_tu_iters() }
    }
}

fn default_beta() -> f64 {
    1.0
}
fn default_tu_iters() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

/// A method token from the config, before the oracle and alpha are bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Naive,
    Prod,
    Tu,
    IterLp,
    Sw,
    Nsw,
    AlphaSw,
}

impl MethodKind {
    pub fn parse(token: &str) -> Result<Self> {
        Ok(match token {
            "naive" => MethodKind::Naive,
            "prod" => MethodKind::Prod,
            "tu" => MethodKind::Tu,
            "iterlp" => MethodKind::IterLp,
            "sw" => MethodKind::Sw,
            "nsw" => MethodKind::Nsw,
            "alpha-sw" | "alpha_sw" => MethodKind::AlphaSw,
            other => bail!(
                "unknown method {other:?} (expected naive, prod, tu, iterlp, sw, nsw, alpha-sw)"
            ),
        })
    }

    pub fn is_optimization(self) -> bool {
        matches!(self, MethodKind::Sw | MethodKind::Nsw | MethodKind::AlphaSw)
    }
}

/// Fully validated run specification.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub source: InstanceSource,
    pub exam: ExaminationModel,
    pub methods: Vec<MethodKind>,
    pub seeds: Vec<u64>,
    pub sigma: f64,
    pub envy_tol: f64,
    pub oracle_kind: OracleKind,
    pub sinkhorn: SinkhornConfig,
    pub optim: OptimSection,
    pub tu: TuConfig,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Exact,
    Sinkhorn,
}

impl OracleKind {
    pub fn label(self) -> &'static str {
        match self {
            OracleKind::Exact => "exact",
            OracleKind::Sinkhorn => "sinkhorn",
        }
    }
}

#[derive(Debug, Clone)]
pub enum InstanceSource {
    Generate { n: usize, m: usize, lambda: f64 },
    Files { p1: PathBuf, p2: PathBuf },
}

impl RunSpec {
    pub fn from_file_config(cfg: &FileConfig) -> Result<Self> {
        let exam = examination_from(&cfg.instance.exam, cfg.instance.threshold)?;
        let source = match cfg.instance.source.as_str() {
            "generate" => {
                let n = cfg.instance.n.context("instance.n is required for source = \"generate\"")?;
                let m = cfg.instance.m.context("instance.m is required for source = \"generate\"")?;
                let lambda =
                    cfg.instance.lambda.context("instance.lambda is required for source = \"generate\"")?;
                InstanceSource::Generate { n, m, lambda }
            }
            "files" => {
                let p1 = cfg.instance.p1.clone().context("instance.p1 is required for source = \"files\"")?;
                let p2 = cfg.instance.p2.clone().context("instance.p2 is required for source = \"files\"")?;
                for path in [&p1, &p2] {
                    if !path.exists() {
                        bail!("preference matrix file not found: {}", path.display());
                    }
                }
                InstanceSource::Files { p1, p2 }
            }
            other => bail!("unknown instance.source {other:?} (expected \"generate\" or \"files\")"),
        };

        if cfg.run.methods.is_empty() {
            bail!("run.methods must list at least one method");
        }
        let methods = cfg
            .run
            .methods
            .iter()
            .map(|token| MethodKind::parse(token))
            .collect::<Result<Vec<_>>>()?;

        let oracle_kind = match cfg.optim.oracle.as_str() {
            "exact" => OracleKind::Exact,
            "sinkhorn" => OracleKind::Sinkhorn,
            other => bail!("unknown optim.oracle {other:?} (expected \"exact\" or \"sinkhorn\")"),
        };

        if cfg.run.sigma < 0.0 {
            bail!("run.sigma must be nonnegative");
        }
        if methods.contains(&MethodKind::AlphaSw) {
            let alpha = cfg.optim.alpha.context("optim.alpha is required for the alpha-sw method")?;
            if !(alpha > 0.0 && alpha < 1.0) {
                bail!("optim.alpha must lie in (0, 1), got {alpha}");
            }
        }

        let spec = RunSpec {
            source,
            exam,
            methods,
            seeds: cfg.run.seeds.parse()?,
            sigma: cfg.run.sigma,
            envy_tol: cfg.run.envy_tol,
            oracle_kind,
            sinkhorn: SinkhornConfig {
                tau: cfg.sinkhorn.tau,
                max_iters: cfg.sinkhorn.max_iters,
                stop_tol: cfg.sinkhorn.stop_tol,
                log_domain: cfg.sinkhorn.log_domain,
            },
            optim: cfg.optim.clone(),
            tu: TuConfig { beta: cfg.tu.beta, iters: cfg.tu.iters },
            out: cfg.output.path.clone(),
        };
        spec.sinkhorn.validate().map_err(anyhow::Error::from)?;
        spec.tu.validate().map_err(anyhow::Error::from)?;
        Ok(spec)
    }

    /// OptimConfig for one optimization method at a given alpha/tau binding.
    pub fn optim_config(&self, kind: MethodKind, alpha: Option<f64>, tau: Option<f64>) -> Result<OptimConfig> {
        let objective = match kind {
            MethodKind::Sw => Objective::Sw,
            MethodKind::Nsw => Objective::Nsw,
            MethodKind::AlphaSw => {
                let alpha = alpha.or(self.optim.alpha).context("alpha-sw needs an alpha value")?;
                Objective::AlphaSw(alpha)
            }
            _ => bail!("{kind:?} is not an optimization method"),
        };
        let oracle = match self.oracle_kind {
            OracleKind::Exact => Oracle::Exact,
            OracleKind::Sinkhorn => {
                let mut sk = self.sinkhorn.clone();
                if let Some(tau) = tau {
                    sk.tau = tau;
                }
                Oracle::Sinkhorn(sk)
            }
        };
        let step = match self.optim.step.as_str() {
            "constant" => StepSchedule::Constant(self.optim.eta),
            "diminishing" => StepSchedule::Diminishing,
            other => bail!("unknown optim.step {other:?} (expected \"constant\" or \"diminishing\")"),
        };
        let mut cfg = OptimConfig::new(objective).with_oracle(oracle);
        cfg.step = step;
        cfg.max_outer_iters = self.optim.max_iters;
        cfg.converge_tol = self.optim.converge_tol;
        cfg.validate().map_err(anyhow::Error::from)?;
        Ok(cfg)
    }

    pub fn lambda(&self) -> Option<f64> {
        match &self.source {
            InstanceSource::Generate { lambda, .. } => Some(*lambda),
            InstanceSource::Files { .. } => None,
        }
    }
}

pub fn examination_from(exam: &str, threshold: Option<usize>) -> Result<ExaminationModel> {
    let kind = exam.parse().map_err(anyhow::Error::from)?;
    ExaminationModel::new(kind, threshold).map_err(anyhow::Error::from)
}

/// Method label appearing in the output CSV, oracle included for the
/// optimization methods.
pub fn method_label(kind: MethodKind, alpha: Option<f64>, oracle: OracleKind) -> String {
    match kind {
        MethodKind::Naive => "naive".into(),
        MethodKind::Prod => "prod".into(),
        MethodKind::Tu => "tu".into(),
        MethodKind::IterLp => "iterlp".into(),
        MethodKind::Sw => format!("sw_{}", oracle.label()),
        MethodKind::Nsw => format!("nsw_{}", oracle.label()),
        MethodKind::AlphaSw => {
            let alpha = alpha.unwrap_or(f64::NAN);
            format!("alpha_sw_{alpha}_{}", oracle.label())
        }
    }
}
