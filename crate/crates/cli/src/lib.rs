//! Library side of the `gpflow` binary: argument resolution, command
//! execution and report serialization.

pub mod config;
pub mod error;
pub mod output;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use gpflow_core::{
    check_suite, cross_scheme_agreement, estimate_poincare, linearized_spectrum, run, ConvergenceReport, Grid, Problem,
    RunConfig,
};

pub use config::{parse_args, Cli, CliConfig, Command, Format};
pub use error::{CliError, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE};
pub use output::{emit_report, Document};

use output::{FinalBlock, Meta, RunDocument, SpectrumBlock, SpectrumDocument, SweepDocument, SweepRow, VerifyDocument};

/// Residual tolerance of the eigensolver, relative to `lambda0`.
pub const EIGEN_TOL: f64 = 1e-10;

/// Environment variable capping sweep parallelism.
pub const THREADS_VAR: &str = "GPFLOW_THREADS";

/// Result of a command: the document to emit and the exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub document: Document,
    pub code: i32,
}

pub fn build_problem(cfg: &CliConfig) -> Result<Problem, CliError> {
    let grid = Arc::new(Grid::new(&cfg.n, &cfg.bounds)?);
    let v = cfg.potential.sample(&grid)?;
    Ok(Problem::new(v, cfg.beta)?)
}

fn status_code(report: &ConvergenceReport) -> i32 {
    if report.converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

/// Worker count for a sweep of `jobs` runs.
pub fn sweep_threads(jobs: usize) -> Result<usize, CliError> {
    let cap = match std::env::var(THREADS_VAR) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(k) if k >= 1 => k,
            _ => return Err(CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got '{s}'"))),
        },
        Err(_) => std::thread::available_parallelism().map(|k| k.get()).unwrap_or(1),
    };
    Ok(cap.min(jobs).max(1))
}

/// Runs every configuration in `plan` on `threads` workers. Results come
/// back in plan order whatever the scheduling.
pub fn run_plan(problem: &Problem, plan: &[RunConfig], threads: usize) -> Result<Vec<ConvergenceReport>, CliError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<gpflow_core::Result<ConvergenceReport>>>> =
        Mutex::new((0..plan.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= plan.len() {
                    break;
                }
                let r = run(problem, &plan[i]);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|r| r.expect("every slot is filled").map_err(CliError::from))
        .collect()
}

pub fn execute(cfg: &CliConfig) -> Result<Outcome, CliError> {
    let problem = build_problem(cfg)?;
    let meta = Meta::new(cfg);
    match cfg.command {
        Command::Run => {
            let report = run(&problem, &cfg.run)?;
            Ok(Outcome {
                code: status_code(&report),
                document: Document::Run(RunDocument::new(meta, &report)),
            })
        }
        Command::Verify => {
            let report = run(&problem, &cfg.run)?;
            let spectral = if report.converged() {
                linearized_spectrum(&problem, &report.final_u, EIGEN_TOL).ok()
            } else {
                None
            };
            let mut checks = check_suite(&problem, &report, spectral.as_ref(), cfg.trials, cfg.run.seed);
            if cfg.cross_scheme {
                checks.push(cross_scheme_agreement(&problem, &cfg.run)?);
            }
            let code = if !report.converged() {
                EXIT_NOT_CONVERGED
            } else if checks.iter().any(|c| c.failed()) {
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            };
            Ok(Outcome {
                code,
                document: Document::Verify(VerifyDocument::new(meta, &report, checks)),
            })
        }
        Command::Spectrum => {
            let report = run(&problem, &cfg.run)?;
            let spectral = linearized_spectrum(&problem, &report.final_u, EIGEN_TOL)?;
            let spectrum = SpectrumBlock::new(&spectral, estimate_poincare(problem.grid()));
            Ok(Outcome {
                code: status_code(&report),
                document: Document::Spectrum(SpectrumDocument {
                    meta,
                    final_: FinalBlock::from(&report),
                    spectrum,
                }),
            })
        }
        Command::Sweep => {
            let plan = cfg.plan();
            let reports = run_plan(&problem, &plan, sweep_threads(plan.len())?)?;
            let code = if reports.iter().all(|r| r.converged()) {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            };
            let runs = plan
                .iter()
                .zip(&reports)
                .map(|(p, r)| SweepRow::new(p.policy.alpha0, r))
                .collect();
            Ok(Outcome {
                code,
                document: Document::Sweep(SweepDocument { meta, runs }),
            })
        }
    }
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = parse_args(args).and_then(|cfg| {
        let outcome = execute(&cfg)?;
        emit_report(&outcome.document, cfg.format, cfg.output.as_deref())?;
        Ok(outcome.code)
    });
    match result {
        Ok(code) => code,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
