//! Green's operators of the H1, a0 and a_u inner products.
//!
//! With uniform nodal weights the discrete L2 mass is `(prod h) I`, so the
//! identity `(z, G w)_X = (z, w)_L2` reduces to the linear system
//! `A_X g = w` with `A_H1 = L`, `A_A0 = L + V` and `A_AU = L + V + beta base^2`.
//! One-dimensional systems are tridiagonal and are eliminated directly;
//! everything else goes through Jacobi-preconditioned conjugate gradients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::grid::{neg_laplacian_into, Grid, GridFunction, Metric, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

/// Inner-solve settings. `max_iter = None` means `10 * dof`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-12,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidConfig(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_iter_for(&self, dof: usize) -> usize {
        self.max_iter.unwrap_or(10 * dof.max(1))
    }
}

/// `A_X = L + diag(w)` for the metric `X` (`w = 0`, `V` or `V + beta base^2`).
#[derive(Debug, Clone)]
pub struct LinearOperator {
    grid: Arc<Grid>,
    kind: MetricKind,
    weights: Vec<f64>,
}

impl LinearOperator {
    pub fn new(metric: Metric<'_>, problem: &Problem) -> Result<Self> {
        metric.check(problem)?;
        let weights = metric
            .weights(problem)
            .ok_or_else(|| Error::InvalidConfig("the L2 metric has no Green's operator to solve".into()))?;
        Ok(LinearOperator {
            grid: problem.grid().clone(),
            kind: metric.kind(),
            weights,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dof(&self) -> usize {
        self.weights.len()
    }

    /// Zeroth-order part `diag(w)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = self.grid.laplacian_diagonal();
        self.weights.iter().map(|w| d + w).collect()
    }

    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        neg_laplacian_into(&self.grid, u, out);
        for ((o, w), x) in out.iter_mut().zip(&self.weights).zip(u) {
            *o += w * x;
        }
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        u.check_grid(&self.grid)?;
        let mut out = vec![0.0; u.len()];
        self.apply_into(u.values(), &mut out);
        Ok(GridFunction::from_raw(u.grid().clone(), out))
    }

    /// Entries of the dense matrix, row major. Only sensible for small grids.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dof();
        let mut m = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for i in 0..n {
                m[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }

    /// Solves `A g = w`, optionally starting CG from `guess`.
    pub(crate) fn solve_raw(&self, w: &[f64], guess: Option<&[f64]>, cfg: &SolverConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if w.iter().all(|&x| x == 0.0) {
            return Ok(vec![0.0; w.len()]);
        }
        if self.grid.dim() == 1 {
            return Ok(self.solve_tridiagonal(w));
        }
        let inv_diag: Option<Vec<f64>> = match cfg.preconditioner {
            Preconditioner::None => None,
            Preconditioner::Jacobi => Some(self.diagonal().iter().map(|d| 1.0 / d).collect()),
        };
        let out = pcg(
            |x, y| self.apply_into(x, y),
            w,
            inv_diag.as_deref(),
            guess,
            cfg.rel_tol,
            cfg.max_iter_for(self.dof()),
        )?;
        Ok(out)
    }

    /// Thomas elimination for the 1D operator. The matrix is an irreducibly
    /// diagonally dominant M-matrix, so no pivoting is needed.
    fn solve_tridiagonal(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let h = self.grid.h()[0];
        let off = -1.0 / (h * h);
        let d0 = 2.0 / (h * h);
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut denom = d0 + self.weights[0];
        c[0] = off / denom;
        x[0] = w[0] / denom;
        for i in 1..n {
            denom = d0 + self.weights[i] - off * c[i - 1];
            c[i] = off / denom;
            x[i] = (w[i] - off * x[i - 1]) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned CG on raw vectors. Converged iterates are confirmed
/// against the true residual; drift between the recursive and the true
/// residual triggers a restart from the current iterate.
fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    rhs: &[f64],
    inv_diag: Option<&[f64]>,
    guess: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rel_tol * bnorm;
    let mut x = match guess {
        Some(g) if g.len() == n && g.iter().all(|v| v.is_finite()) => g.to_vec(),
        _ => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut best = x.clone();
    let mut best_res = f64::INFINITY;

    loop {
        // true residual
        apply(&x, &mut q);
        for i in 0..n {
            r[i] = rhs[i] - q[i];
        }
        let true_res = norm2(&r);
        if true_res < best_res {
            best_res = true_res;
            best.copy_from_slice(&x);
        }
        if true_res <= target {
            return Ok(x);
        }
        if iterations >= max_iter {
            return Err(Error::SolverNotConverged {
                iterations,
                residual: best_res / bnorm,
                best,
            });
        }
        precondition(inv_diag, &r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                break;
            }
            let a = rz / pq;
            for i in 0..n {
                x[i] += a * p[i];
                r[i] -= a * q[i];
            }
            if norm2(&r) <= target {
                break;
            }
            precondition(inv_diag, &r, &mut z);
            let rz_new = dot(&r, &z);
            let b = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + b * p[i];
            }
        }
    }
}

fn precondition(inv_diag: Option<&[f64]>, r: &[f64], z: &mut [f64]) {
    match inv_diag {
        Some(d) => {
            for ((z, r), d) in z.iter_mut().zip(r).zip(d) {
                *z = r * d;
            }
        }
        None => z.copy_from_slice(r),
    }
}

/// Conjugate gradients for an SPD operator given as a callback
/// `apply(x, out)`. The callback carries no diagonal, so no preconditioner is
/// used; `cfg.preconditioner` is ignored here.
pub fn conjugate_gradient(
    apply: impl FnMut(&[f64], &mut [f64]),
    rhs: &GridFunction,
    cfg: &SolverConfig,
) -> Result<GridFunction> {
    cfg.validate()?;
    let x = pcg(apply, rhs.values(), None, None, cfg.rel_tol, cfg.max_iter_for(rhs.len()))?;
    Ok(GridFunction::from_raw(rhs.grid().clone(), x))
}

/// `G_X w`: the solution of `A_X g = w`.
pub fn solve_green(metric: Metric<'_>, problem: &Problem, w: &GridFunction, cfg: &SolverConfig) -> Result<GridFunction> {
    solve_green_from(metric, problem, w, cfg, None)
}

/// [`solve_green`] with an optional CG starting point (ignored by the direct
/// 1D path).
pub fn solve_green_from(
    metric: Metric<'_>,
    problem: &Problem,
    w: &GridFunction,
    cfg: &SolverConfig,
    guess: Option<&GridFunction>,
) -> Result<GridFunction> {
    w.check_grid(problem.grid())?;
    let op = LinearOperator::new(metric, problem)?;
    let g = op.solve_raw(w.values(), guess.map(|g| g.values()), cfg)?;
    Ok(GridFunction::from_raw(w.grid().clone(), g))
}
