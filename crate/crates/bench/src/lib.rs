//! Problem constructors shared by the criterion benches.

use std::sync::Arc;

use gpflow_core::{Grid, Potential, Problem, Result};

/// Potential presets of the benchmark set.
pub const POTENTIALS: [&str; 3] = ["zero", "harmonic:20", "well:1000:0.25:0.75"];

/// Interaction strengths of the benchmark set.
pub const BETAS: [f64; 3] = [0.0, 10.0, 100.0];

/// `(dim, n)` grids of the benchmark set.
pub const GRIDS: [(usize, usize); 2] = [(1, 255), (2, 63)];

/// Problem on the unit box with `n` interior nodes per axis.
pub fn problem(dim: usize, n: usize, potential: &str, beta: f64) -> Result<Problem> {
    let grid = Arc::new(Grid::unit(dim, n)?);
    let v = potential
        .parse::<Potential>()?
        .sample(&grid)?;
    Problem::new(v, beta)
}

/// Every problem of the benchmark set with a short label.
pub fn benchmark_set() -> Result<Vec<(String, Problem)>> {
    let mut out = Vec::new();
    for (dim, n) in GRIDS {
        for pot in POTENTIALS {
            for beta in BETAS {
                out.push((format!("{dim}d/{pot}/beta{beta}"), problem(dim, n, pot, beta)?));
            }
        }
    }
    Ok(out)
}
