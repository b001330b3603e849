//! The Gross-Pitaevskii energy, its metric gradients, tangent projections,
//! Riemannian gradients, the retraction and the multiplier `gamma`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{solve_green_from, SolverConfig};
use crate::grid::{edge_sum, norm_l2, norm_unchecked, Grid, GridFunction, Metric};

/// Tolerance on `| ||u||_L2 - 1 |` for membership in the constraint sphere.
pub const MANIFOLD_TOL: f64 = 1e-10;

/// Grid, non-negative potential and interaction strength.
#[derive(Debug, Clone)]
pub struct Problem {
    potential: GridFunction,
    v_max: f64,
    beta: f64,
}

impl Problem {
    pub fn new(potential: GridFunction, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidProblem(format!("beta must be finite and >= 0, got {beta}")));
        }
        if let Some(i) = potential.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidProblem(format!(
                "potential is negative at node {i} ({})",
                potential.values()[i]
            )));
        }
        let v_max = potential.values().iter().fold(0.0f64, |m, &v| m.max(v));
        Ok(Problem { potential, v_max, beta })
    }

    /// Zero potential.
    pub fn free(grid: Arc<Grid>, beta: f64) -> Result<Self> {
        Problem::new(GridFunction::zeros(grid), beta)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.potential.grid()
    }

    pub fn potential(&self) -> &GridFunction {
        &self.potential
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    H1,
    A0,
    Au,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::H1, SchemeKind::A0, SchemeKind::Au];

    /// Metric of the scheme at base point `u`.
    pub fn metric<'a>(&self, u: &'a GridFunction) -> Metric<'a> {
        match self {
            SchemeKind::H1 => Metric::H1,
            SchemeKind::A0 => Metric::A0,
            SchemeKind::Au => Metric::Au(u),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::H1 => "h1",
            SchemeKind::A0 => "a0",
            SchemeKind::Au => "au",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h1" => Ok(SchemeKind::H1),
            "a0" => Ok(SchemeKind::A0),
            "au" => Ok(SchemeKind::Au),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme '{other}' (valid schemes: h1, a0, au)"
            ))),
        }
    }
}

fn check_problem(problem: &Problem, u: &GridFunction) -> Result<()> {
    u.check_grid(problem.grid())
}

fn check_manifold(u: &GridFunction) -> Result<()> {
    let norm = norm_l2(u);
    if (norm - 1.0).abs() > MANIFOLD_TOL {
        return Err(Error::NotOnManifold { norm });
    }
    Ok(())
}

/// `E(u) = 1/2 |grad u|^2 + 1/2 V u^2 + beta/4 u^4`, all integrals by the
/// nodal quadrature.
pub fn energy(problem: &Problem, u: &GridFunction) -> Result<f64> {
    check_problem(problem, u)?;
    Ok(energy_unchecked(problem, u.values()))
}

pub(crate) fn energy_unchecked(problem: &Problem, u: &[f64]) -> f64 {
    let grid = problem.grid();
    let vol = grid.cell_volume();
    let beta = problem.beta();
    let local: f64 = problem
        .potential()
        .values()
        .iter()
        .zip(u)
        .map(|(v, x)| {
            let x2 = x * x;
            0.5 * v * x2 + 0.25 * beta * x2 * x2
        })
        .sum();
    vol * (0.5 * edge_sum(grid, u, u) + local)
}

/// `E(v) - E(u)`, evaluated through the exact expansion in `d = v - u`:
/// `E'(u) d + 1/2 a_0(d, d) + beta * sum(3/2 u^2 d^2 + u d^3 + 1/4 d^4)`.
/// Every term scales with `d`, so small differences keep full relative
/// accuracy instead of cancelling between two `O(E)` numbers.
pub fn energy_change(problem: &Problem, u: &GridFunction, v: &GridFunction) -> Result<f64> {
    check_problem(problem, u)?;
    check_problem(problem, v)?;
    let d: Vec<f64> = v.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
    Ok(energy_change_raw(problem, u.values(), &d))
}

pub(crate) fn energy_change_raw(problem: &Problem, u: &[f64], d: &[f64]) -> f64 {
    let grid = problem.grid();
    let vol = grid.cell_volume();
    let beta = problem.beta();
    let linear_stiff = edge_sum(grid, u, d);
    let quad_stiff = edge_sum(grid, d, d);
    let local: f64 = problem
        .potential()
        .values()
        .iter()
        .zip(u.iter().zip(d))
        .map(|(v, (&x, &e))| {
            let first = (v * x + beta * x * x * x) * e;
            let e2 = e * e;
            let second = 0.5 * v * e2 + beta * (1.5 * x * x * e2 + x * e2 * e + 0.25 * e2 * e2);
            first + second
        })
        .sum();
    vol * (linear_stiff + 0.5 * quad_stiff + local)
}

/// The pieces of a Riemannian gradient: the metric gradient `grad`, the
/// Green's function `G u`, the multiplier `gamma = (grad, u)_L2 / (G u, u)_L2`
/// and `riemannian = grad - gamma * G u`.
#[derive(Debug, Clone)]
pub struct GradientSplit {
    pub kind: SchemeKind,
    pub gradient: GridFunction,
    pub green_u: GridFunction,
    pub gamma: f64,
    pub riemannian: GridFunction,
}

impl GradientSplit {
    /// `|| riemannian ||_X` in the scheme's metric at `u`.
    pub fn residual(&self, problem: &Problem, u: &GridFunction) -> f64 {
        norm_unchecked(self.kind.metric(u), problem, self.riemannian.values())
    }
}

/// Previous Green's solutions reused as CG starting points.
#[derive(Debug, Default, Clone)]
pub(crate) struct WarmStart {
    green_u: Option<GridFunction>,
    green_f: Option<GridFunction>,
}

fn cube(u: &GridFunction) -> GridFunction {
    u.map(|x| x * x * x)
}

/// Nonlinear source of the metric gradient: `V u + beta u^3` for H1,
/// `beta u^3` for a0, nothing for a_u.
fn gradient_source(kind: SchemeKind, problem: &Problem, u: &GridFunction) -> Option<GridFunction> {
    let beta = problem.beta();
    match kind {
        SchemeKind::H1 => {
            let f = u.map_with(problem.potential(), |x, v| v * x + beta * x * x * x);
            Some(f)
        }
        SchemeKind::A0 => (beta != 0.0).then(|| cube(u).scaled(beta)),
        SchemeKind::Au => None,
    }
}

fn metric_gradient_warm(
    kind: SchemeKind,
    problem: &Problem,
    u: &GridFunction,
    cfg: &SolverConfig,
    warm: &mut WarmStart,
) -> Result<GridFunction> {
    match gradient_source(kind, problem, u) {
        None => Ok(u.clone()),
        Some(f) => {
            let g = solve_green_from(kind.metric(u), problem, &f, cfg, warm.green_f.as_ref())?;
            let grad = u.lincomb_unchecked(1.0, 1.0, &g);
            warm.green_f = Some(g);
            Ok(grad)
        }
    }
}

/// Sobolev gradient of `E` in the scheme's metric:
/// `u + G_H1(V u + beta u^3)`, `u + beta G_a0(u^3)` or `u` (a_u).
pub fn metric_gradient(kind: SchemeKind, problem: &Problem, u: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    check_problem(problem, u)?;
    metric_gradient_warm(kind, problem, u, cfg, &mut WarmStart::default())
}

pub(crate) fn split_gradient_warm(
    kind: SchemeKind,
    problem: &Problem,
    u: &GridFunction,
    cfg: &SolverConfig,
    warm: &mut WarmStart,
) -> Result<GradientSplit> {
    check_problem(problem, u)?;
    check_manifold(u)?;
    let gradient = metric_gradient_warm(kind, problem, u, cfg, warm)?;
    let green_u = solve_green_from(kind.metric(u), problem, u, cfg, warm.green_u.as_ref())?;
    let vol = problem.grid().cell_volume();
    let dot = |a: &GridFunction, b: &GridFunction| -> f64 {
        vol * a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>()
    };
    let gamma = dot(&gradient, u) / dot(&green_u, u);
    let riemannian = gradient.lincomb_unchecked(1.0, -gamma, &green_u);
    warm.green_u = Some(green_u.clone());
    Ok(GradientSplit {
        kind,
        gradient,
        green_u,
        gamma,
        riemannian,
    })
}

/// Metric gradient, Green's function of `u`, multiplier and Riemannian
/// gradient in one pass.
pub fn split_gradient(kind: SchemeKind, problem: &Problem, u: &GridFunction, cfg: &SolverConfig) -> Result<GradientSplit> {
    split_gradient_warm(kind, problem, u, cfg, &mut WarmStart::default())
}

/// Projection of `xi` onto the tangent space `{(., u)_L2 = 0}` that is
/// orthogonal in `metric`: `xi - (xi, u)_L2 / (G u, u)_L2 * G u`.
/// `(G u, u)_L2` equals `||G u||_X^2` by the adjoint identity.
pub fn project_tangent(
    metric: Metric<'_>,
    problem: &Problem,
    u: &GridFunction,
    xi: &GridFunction,
    cfg: &SolverConfig,
) -> Result<GridFunction> {
    check_problem(problem, u)?;
    check_problem(problem, xi)?;
    check_manifold(u)?;
    let green_u = solve_green_from(metric, problem, u, cfg, None)?;
    let vol = problem.grid().cell_volume();
    let xu: f64 = vol * xi.values().iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>();
    let gu: f64 = vol * green_u.values().iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>();
    Ok(xi.lincomb_unchecked(1.0, -xu / gu, &green_u))
}

/// Metric gradient projected onto the tangent space at `u`.
pub fn riemannian_gradient(kind: SchemeKind, problem: &Problem, u: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    Ok(split_gradient(kind, problem, u, cfg)?.riemannian)
}

/// Coefficient of `G u` in the Riemannian gradient; the eigenvalue estimate.
pub fn gamma(kind: SchemeKind, problem: &Problem, u: &GridFunction, cfg: &SolverConfig) -> Result<f64> {
    Ok(split_gradient(kind, problem, u, cfg)?.gamma)
}

/// `R(u) = u / ||u||_L2`.
pub fn retract(u: &GridFunction) -> Result<GridFunction> {
    let n = norm_l2(u);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroRetraction);
    }
    Ok(u.scaled(1.0 / n))
}
