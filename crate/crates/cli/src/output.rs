//! Report documents and their JSON / CSV renderings.

use std::io::Write;
use std::path::Path;

use gpflow_core::{CheckResult, ConvergenceReport, IterationRecord, RateFit, SpectralReport};
use serde::{Deserialize, Serialize};

use crate::config::{CliConfig, Format};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub scheme: String,
    pub dim: usize,
    pub n: Vec<usize>,
    pub beta: f64,
    pub potential: String,
    pub seed: u64,
    pub version: String,
}

impl Meta {
    pub fn new(cfg: &CliConfig) -> Self {
        Meta {
            scheme: cfg.run.scheme.as_str().to_string(),
            dim: cfg.dim,
            n: cfg.n.clone(),
            beta: cfg.beta,
            potential: cfg.potential_spec.clone(),
            seed: cfg.run.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub n: usize,
    pub energy: f64,
    pub residual: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub decrease: f64,
}

impl From<&IterationRecord> for IterationRow {
    fn from(r: &IterationRecord) -> Self {
        IterationRow {
            n: r.n,
            energy: r.energy,
            residual: r.residual,
            gamma: r.gamma,
            alpha: r.alpha,
            decrease: r.decrease,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub rho: f64,
    pub r_squared: f64,
}

impl From<&RateFit> for RateRow {
    fn from(r: &RateFit) -> Self {
        RateRow {
            rho: r.rho,
            r_squared: r.r_squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalBlock {
    pub status: String,
    pub lambda: f64,
    pub rate: Option<RateRow>,
}

impl From<&ConvergenceReport> for FinalBlock {
    fn from(r: &ConvergenceReport) -> Self {
        FinalBlock {
            status: r.status.as_str().to_string(),
            lambda: r.lambda(),
            rate: r.rate.as_ref().map(RateRow::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub meta: Meta,
    pub iterations: Vec<IterationRow>,
    #[serde(rename = "final")]
    pub final_: FinalBlock,
}

impl RunDocument {
    pub fn new(meta: Meta, report: &ConvergenceReport) -> Self {
        RunDocument {
            meta,
            iterations: report.records.iter().map(IterationRow::from).collect(),
            final_: FinalBlock::from(report),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyDocument {
    pub meta: Meta,
    #[serde(rename = "final")]
    pub final_: FinalBlock,
    pub checks: Vec<CheckResult>,
    pub summary: Summary,
}

impl VerifyDocument {
    pub fn new(meta: Meta, report: &ConvergenceReport, mut checks: Vec<CheckResult>) -> Self {
        for c in &mut checks {
            // JSON has no infinities
            c.margin = c.margin.filter(|m| m.is_finite());
        }
        let summary = Summary {
            passed: checks.iter().filter(|c| c.passed).count(),
            failed: checks.iter().filter(|c| c.failed()).count(),
            skipped: checks.iter().filter(|c| c.skipped).count(),
        };
        VerifyDocument {
            meta,
            final_: FinalBlock::from(report),
            checks,
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBlock {
    pub lambda0: f64,
    pub lambda1: f64,
    pub gap: f64,
    pub gap_factor: f64,
    pub method: String,
    pub residuals: [f64; 2],
    pub iterations: usize,
    pub poincare: f64,
}

impl SpectrumBlock {
    pub fn new(s: &SpectralReport, poincare: f64) -> Self {
        let method = match s.method {
            gpflow_core::EigenMethod::Dense => "dense",
            gpflow_core::EigenMethod::InverseIteration => "inverse_iteration",
        };
        SpectrumBlock {
            lambda0: s.lambda0,
            lambda1: s.lambda1,
            gap: s.gap(),
            gap_factor: s.gap_factor,
            method: method.to_string(),
            residuals: s.residuals,
            iterations: s.iterations,
            poincare,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub meta: Meta,
    #[serde(rename = "final")]
    pub final_: FinalBlock,
    pub spectrum: SpectrumBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub status: String,
    pub iterations: usize,
    pub lambda: f64,
    pub residual: f64,
    pub rate: Option<RateRow>,
}

impl SweepRow {
    pub fn new(alpha: f64, report: &ConvergenceReport) -> Self {
        SweepRow {
            alpha,
            status: report.status.as_str().to_string(),
            iterations: report.records.len() - 1,
            lambda: report.lambda(),
            residual: report.last().residual,
            rate: report.rate.as_ref().map(RateRow::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub meta: Meta,
    pub runs: Vec<SweepRow>,
}

/// Any document the CLI can emit.
#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Run(RunDocument),
    Verify(VerifyDocument),
    Spectrum(SpectrumDocument),
    Sweep(SweepDocument),
}

/// Shortest round-trip rendering is used for JSON; CSV uses this fixed
/// 17-significant-digit form.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt17(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents contain only finite numbers and strings");
    s.push('\n');
    s
}

pub fn trace_csv(rows: &[IterationRow]) -> String {
    let mut s = String::from("n,energy,residual,gamma,alpha,decrease\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            fmt17(r.energy),
            fmt17(r.residual),
            fmt17(r.gamma),
            fmt17(r.alpha),
            fmt17(r.decrease)
        ));
    }
    s
}

impl Document {
    pub fn render(&self, format: Format) -> String {
        match (self, format) {
            (Document::Run(d), Format::Json) => to_json(d),
            (Document::Verify(d), Format::Json) => to_json(d),
            (Document::Spectrum(d), Format::Json) => to_json(d),
            (Document::Sweep(d), Format::Json) => to_json(d),
            (Document::Run(d), Format::Csv) => trace_csv(&d.iterations),
            (Document::Verify(d), Format::Csv) => {
                let mut s = String::from("name,passed,skipped,margin,trials,detail\n");
                for c in &d.checks {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        c.name,
                        c.passed,
                        c.skipped,
                        opt17(c.margin),
                        c.trials,
                        csv_field(&c.detail)
                    ));
                }
                s
            }
            (Document::Spectrum(d), Format::Csv) => {
                let b = &d.spectrum;
                format!(
                    "lambda0,lambda1,gap,gap_factor,method,residual0,residual1,iterations,poincare\n{},{},{},{},{},{},{},{},{}\n",
                    fmt17(b.lambda0),
                    fmt17(b.lambda1),
                    fmt17(b.gap),
                    fmt17(b.gap_factor),
                    b.method,
                    fmt17(b.residuals[0]),
                    fmt17(b.residuals[1]),
                    b.iterations,
                    fmt17(b.poincare)
                )
            }
            (Document::Sweep(d), Format::Csv) => {
                let mut s = String::from("alpha,status,iterations,lambda,residual,rho,r_squared\n");
                for r in &d.runs {
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        fmt17(r.alpha),
                        r.status,
                        r.iterations,
                        fmt17(r.lambda),
                        fmt17(r.residual),
                        opt17(r.rate.map(|x| x.rho)),
                        opt17(r.rate.map(|x| x.r_squared))
                    ));
                }
                s
            }
        }
    }
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn write_output(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p.to_path_buf(), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

/// Renders and writes a document.
pub fn emit_report(doc: &Document, format: Format, path: Option<&Path>) -> Result<(), CliError> {
    write_output(&doc.render(format), path)
}
