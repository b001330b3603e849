//! Potential presets: `zero`, `harmonic:<omega>` and
//! `well:<depth>:<lo>:<hi>`. Node-value files are read by the CLI and handed
//! over as [`Potential::Samples`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    Zero,
    /// `V = 1/2 omega^2 sum_k (x_k - c_k)^2`, `c` the box centre.
    Harmonic { omega: f64 },
    /// `V = depth` unless every coordinate lies in `[lo, hi]`, else 0.
    Well { depth: f64, lo: f64, hi: f64 },
    /// Node values in lexicographic order.
    Samples(Vec<f64>),
}

impl Potential {
    pub fn sample(&self, grid: &Arc<Grid>) -> Result<GridFunction> {
        let center: Vec<f64> = grid.bounds().iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let f = match self {
            Potential::Zero => GridFunction::zeros(grid.clone()),
            Potential::Harmonic { omega } => GridFunction::from_fn(grid.clone(), |x| {
                let r2: f64 = x.iter().zip(&center).map(|(x, c)| (x - c) * (x - c)).sum();
                0.5 * omega * omega * r2
            })?,
            Potential::Well { depth, lo, hi } => GridFunction::from_fn(grid.clone(), |x| {
                if x.iter().all(|&c| c >= *lo && c <= *hi) {
                    0.0
                } else {
                    *depth
                }
            })?,
            Potential::Samples(values) => GridFunction::new(grid.clone(), values.clone())?,
        };
        if let Some(i) = f.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidProblem(format!(
                "potential '{self}' is negative at node {i} ({})",
                f.values()[i]
            )));
        }
        Ok(f)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "zero"),
            Potential::Harmonic { omega } => write!(f, "harmonic:{omega}"),
            Potential::Well { depth, lo, hi } => write!(f, "well:{depth}:{lo}:{hi}"),
            Potential::Samples(v) => write!(f, "samples[{}]", v.len()),
        }
    }
}

fn parse_num(field: &str, what: &str, spec: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("potential '{spec}': {what} '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::InvalidConfig(format!("potential '{spec}': {what} must be finite")));
    }
    Ok(v)
}

impl FromStr for Potential {
    type Err = Error;

    /// Parses `zero`, `harmonic:<omega>` or `well:<depth>:<lo>:<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["zero"] => Ok(Potential::Zero),
            ["harmonic", omega] => Ok(Potential::Harmonic {
                omega: parse_num(omega, "omega", s)?,
            }),
            ["well", depth, lo, hi] => {
                let depth = parse_num(depth, "depth", s)?;
                let lo = parse_num(lo, "lo", s)?;
                let hi = parse_num(hi, "hi", s)?;
                if depth < 0.0 {
                    return Err(Error::InvalidConfig(format!("potential '{s}': depth must be >= 0")));
                }
                if lo > hi {
                    return Err(Error::InvalidConfig(format!("potential '{s}': lo must not exceed hi")));
                }
                Ok(Potential::Well { depth, lo, hi })
            }
            _ => Err(Error::InvalidConfig(format!(
                "unknown potential '{s}' (expected zero, harmonic:<omega>, well:<depth>:<lo>:<hi> or file:<path>)"
            ))),
        }
    }
}
