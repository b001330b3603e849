//! Command-line and config-file parsing. Flags override file values, which
//! override the defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use gpflow_core::{Init, Potential, RunConfig, SchemeKind, StepMode, StepPolicy};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gpflow", version, about = "Ground states of the Gross-Pitaevskii energy by projected Sobolev gradient flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run one scheme and emit the iteration trace.
    Run(Args),
    /// Run one scheme, then evaluate the check suite on the result.
    Verify(Args),
    /// Run one scheme, then report the linearized spectrum at the result.
    Spectrum(Args),
    /// Run one scheme for each stepsize in --alphas.
    Sweep(Args),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Args {
    /// TOML file with any of the options below (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Spatial dimension (1, 2 or 3).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Interior nodes per axis: one count for all axes or a comma list.
    #[arg(long)]
    pub n: Option<String>,
    /// Per-axis intervals `a:b`, comma separated (default 0:1 on every axis).
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// zero | harmonic:<omega> | well:<depth>:<lo>:<hi> | file:<path>
    #[arg(long)]
    pub potential: Option<String>,
    /// Interaction strength (>= 0).
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// h1 | a0 | au
    #[arg(long)]
    pub scheme: Option<String>,
    /// backtracking | fixed
    #[arg(long)]
    pub step: Option<String>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub shrink: Option<f64>,
    #[arg(long)]
    pub alpha_floor: Option<f64>,
    /// Residual tolerance in the scheme's metric.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Seed for every random choice (initial guess, check probes).
    #[arg(long)]
    pub seed: Option<u64>,
    /// default_bump | random | file:<path>
    #[arg(long)]
    pub init: Option<String>,
    /// json | csv
    #[arg(long)]
    pub format: Option<String>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Random probes per sampled check (verify only).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated stepsizes (sweep only).
    #[arg(long)]
    pub alphas: Option<String>,
    /// Also compare all three schemes (verify only).
    #[arg(long)]
    pub cross_scheme: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dim: Option<usize>,
    n: Option<OneOrMany<usize>>,
    bounds: Option<Vec<(f64, f64)>>,
    potential: Option<String>,
    beta: Option<f64>,
    scheme: Option<String>,
    step: Option<String>,
    alpha0: Option<f64>,
    shrink: Option<f64>,
    alpha_floor: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    seed: Option<u64>,
    init: Option<String>,
    format: Option<String>,
    output: Option<PathBuf>,
    trials: Option<usize>,
    alphas: Option<Vec<f64>>,
    cross_scheme: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Verify,
    Spectrum,
    Sweep,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Verify => "verify",
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::Usage(format!("unknown format '{other}' (valid formats: json, csv)"))),
        }
    }
}

/// Fully resolved invocation.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub command: Command,
    pub dim: usize,
    pub n: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    /// The potential as written by the user, for the report header.
    pub potential_spec: String,
    pub potential: Potential,
    pub beta: f64,
    pub run: RunConfig,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub trials: usize,
    /// Stepsizes of a sweep, one sub-run each.
    pub alphas: Vec<f64>,
    pub cross_scheme: bool,
}

pub const DEFAULT_TRIALS: usize = 5;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| usage(format!("--{what}: '{}' is not a valid value", p.trim())))
        })
        .collect()
}

fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>, CliError> {
    s.split(',')
        .map(|p| {
            let (a, b) = p
                .split_once(':')
                .ok_or_else(|| usage(format!("--bounds: '{p}' is not of the form a:b")))?;
            let a: f64 = a.trim().parse().map_err(|_| usage(format!("--bounds: '{a}' is not a number")))?;
            let b: f64 = b.trim().parse().map_err(|_| usage(format!("--bounds: '{b}' is not a number")))?;
            Ok((a, b))
        })
        .collect()
}

/// Reads numbers separated by commas, whitespace or newlines.
pub fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.to_path_buf(), e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| usage(format!("{}: '{t}' is not a number", path.display())))
        })
        .collect()
}

fn parse_potential(spec: &str) -> Result<Potential, CliError> {
    if let Some(path) = spec.strip_prefix("file:") {
        return Ok(Potential::Samples(read_values(Path::new(path))?));
    }
    spec.parse::<Potential>().map_err(|e| usage(e.to_string()))
}

fn parse_init(spec: &str) -> Result<Init, CliError> {
    match spec {
        "default_bump" => Ok(Init::DefaultBump),
        "random" => Ok(Init::Random),
        other => match other.strip_prefix("file:") {
            Some(path) => Ok(Init::Values(read_values(Path::new(path))?)),
            None => Err(usage(format!(
                "unknown init '{other}' (valid: default_bump, random, file:<path>)"
            ))),
        },
    }
}

fn parse_step(spec: &str) -> Result<StepMode, CliError> {
    match spec {
        "backtracking" => Ok(StepMode::Backtracking),
        "fixed" => Ok(StepMode::Fixed),
        other => Err(usage(format!("unknown step mode '{other}' (valid: backtracking, fixed)"))),
    }
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.to_path_buf(), e))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.message().to_string();
        usage(format!("{}: {}", path.display(), msg.lines().next().unwrap_or("invalid config")))
    })
}

/// Parses an argument list (including the program name).
pub fn parse_args<I, T>(args: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::Clap)?;
    let (command, args) = match cli.command {
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Spectrum(a) => (Command::Spectrum, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let file = match &args.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    parse_config(command, &args, file)
}

fn parse_config(command: Command, args: &Args, file: FileConfig) -> Result<CliConfig, CliError> {
    let dim = args.dim.or(file.dim).unwrap_or(1);
    if !(1..=3).contains(&dim) {
        return Err(usage(format!("--dim must be 1, 2 or 3, got {dim}")));
    }
    let n = match &args.n {
        Some(s) => parse_list::<usize>(s, "n")?,
        None => file.n.clone().map(OneOrMany::into_vec).unwrap_or_else(|| vec![127]),
    };
    let n = match n.len() {
        1 => vec![n[0]; dim],
        k if k == dim => n,
        k => return Err(usage(format!("--n lists {k} counts but --dim is {dim}"))),
    };
    let bounds = match &args.bounds {
        Some(s) => parse_bounds(s)?,
        None => file.bounds.clone().unwrap_or_else(|| vec![(0.0, 1.0)]),
    };
    let bounds = match bounds.len() {
        1 => vec![bounds[0]; dim],
        k if k == dim => bounds,
        k => return Err(usage(format!("--bounds lists {k} intervals but --dim is {dim}"))),
    };

    let potential_spec = args
        .potential
        .clone()
        .or(file.potential.clone())
        .unwrap_or_else(|| "zero".to_string());
    let potential = parse_potential(&potential_spec)?;
    let beta = args.beta.or(file.beta).unwrap_or(0.0);
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(usage(format!("--beta must be finite and >= 0, got {beta}")));
    }

    let scheme_s = args.scheme.clone().or(file.scheme.clone()).unwrap_or_else(|| "h1".into());
    let scheme: SchemeKind = scheme_s.parse().map_err(|e: gpflow_core::Error| usage(e.to_string()))?;

    let step_default = if command == Command::Sweep { "fixed" } else { "backtracking" };
    let mode = parse_step(args.step.as_deref().or(file.step.as_deref()).unwrap_or(step_default))?;
    let defaults = StepPolicy::default();
    let policy = StepPolicy {
        mode,
        alpha0: args.alpha0.or(file.alpha0).unwrap_or(defaults.alpha0),
        shrink: args.shrink.or(file.shrink).unwrap_or(defaults.shrink),
        alpha_floor: args.alpha_floor.or(file.alpha_floor).unwrap_or(defaults.alpha_floor),
    };

    let mut run = RunConfig::new(scheme);
    run.policy = policy;
    run.tol = args.tol.or(file.tol).unwrap_or(run.tol);
    run.max_iter = args.max_iter.or(file.max_iter).unwrap_or(run.max_iter);
    run.seed = args.seed.or(file.seed).unwrap_or(0);
    run.init = parse_init(args.init.as_deref().or(file.init.as_deref()).unwrap_or("default_bump"))?;

    let format: Format = args
        .format
        .as_deref()
        .or(file.format.as_deref())
        .unwrap_or("json")
        .parse()?;
    let output = args.output.clone().or(file.output.clone());

    let trials_given = args.trials.or(file.trials);
    if trials_given.is_some() && command != Command::Verify {
        return Err(usage("--trials only applies to the verify command"));
    }
    let cross_scheme = args.cross_scheme || file.cross_scheme.unwrap_or(false);
    if cross_scheme && command != Command::Verify {
        return Err(usage("--cross-scheme only applies to the verify command"));
    }
    let alphas = match &args.alphas {
        Some(s) => Some(parse_list::<f64>(s, "alphas")?),
        None => file.alphas.clone(),
    };
    let alphas = match (command, alphas) {
        (Command::Sweep, Some(a)) if !a.is_empty() => a,
        (Command::Sweep, _) => return Err(usage("sweep needs a stepsize list, e.g. --alphas 0.05,0.1,0.2")),
        (_, Some(_)) => return Err(usage("--alphas only applies to the sweep command")),
        (_, None) => Vec::new(),
    };
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(usage(format!("--alphas: stepsizes must be positive, got {a}")));
    }

    let cfg = CliConfig {
        command,
        dim,
        n,
        bounds,
        potential_spec,
        potential,
        beta,
        run,
        format,
        output,
        trials: trials_given.unwrap_or(DEFAULT_TRIALS),
        alphas,
        cross_scheme,
    };
    // surface invalid numeric settings before any work starts
    for plan in cfg.plan() {
        plan.validate().map_err(|e| usage(e.to_string()))?;
    }
    Ok(cfg)
}

impl CliConfig {
    /// Run configurations to execute: one per stepsize for a sweep, one
    /// otherwise.
    pub fn plan(&self) -> Vec<RunConfig> {
        if self.command != Command::Sweep {
            return vec![self.run.clone()];
        }
        self.alphas
            .iter()
            .map(|&alpha| {
                let mut cfg = self.run.clone();
                cfg.policy.alpha0 = alpha;
                cfg.policy.alpha_floor = cfg.policy.alpha_floor.min(alpha);
                cfg
            })
            .collect()
    }
}
