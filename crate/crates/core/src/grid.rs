//! Tensor-product box grids with homogeneous Dirichlet boundary, the
//! second-order finite-difference Laplacian and the discrete inner products.
//!
//! Only interior nodes are stored. Values are ordered lexicographically with
//! the last axis varying fastest, so the node with per-axis indices
//! `(i0, i1, i2)` sits at `(i0 * n1 + i1) * n2 + i2`. Node `i` on axis `k`
//! has coordinate `a_k + (i + 1) * h_k`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    h: Vec<f64>,
}

impl Grid {
    /// Builds a grid from per-axis interior node counts and intervals.
    pub fn new(n: &[usize], bounds: &[(f64, f64)]) -> Result<Self> {
        if n.is_empty() || n.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3, got {}",
                n.len()
            )));
        }
        if bounds.len() != n.len() {
            return Err(Error::InvalidGrid(format!(
                "{} node counts but {} intervals",
                n.len(),
                bounds.len()
            )));
        }
        let mut h = Vec::with_capacity(n.len());
        for (axis, (&count, &(a, b))) in n.iter().zip(bounds).enumerate() {
            if count == 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has no interior nodes"
                )));
            }
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} interval ({a}, {b}) is degenerate"
                )));
            }
            h.push((b - a) / (count as f64 + 1.0));
        }
        Ok(Grid {
            n: n.to_vec(),
            bounds: bounds.to_vec(),
            h,
        })
    }

    /// `build_grid`: same as [`Grid::new`] with an explicit dimension that
    /// must agree with the slices.
    pub fn build(dim: usize, n: &[usize], bounds: &[(f64, f64)]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if n.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} but {} node counts",
                n.len()
            )));
        }
        Grid::new(n, bounds)
    }

    /// Unit interval/square/cube with `n` interior nodes per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Grid::build(dim, &vec![n; dim], &vec![(0.0, 1.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Number of interior nodes.
    pub fn dof(&self) -> usize {
        self.n.iter().product()
    }

    /// Quadrature weight of every node, `prod h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Node counts padded to three axes with leading ones.
    pub(crate) fn shape3(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        let off = 3 - self.n.len();
        s[off..].copy_from_slice(&self.n);
        s
    }

    /// `1/h_k^2` padded like [`Grid::shape3`]; padded axes get zero.
    pub(crate) fn inv_h2_3(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        let off = 3 - self.n.len();
        for (k, h) in self.h.iter().enumerate() {
            c[off + k] = 1.0 / (h * h);
        }
        c
    }

    /// Coordinates of the node with flat index `index`.
    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut x = vec![0.0; self.dim()];
        for k in (0..self.dim()).rev() {
            let i = rem % self.n[k];
            rem /= self.n[k];
            x[k] = self.bounds[k].0 + (i as f64 + 1.0) * self.h[k];
        }
        x
    }

    /// Diagonal entry of the discrete `-Laplacian`.
    pub(crate) fn laplacian_diagonal(&self) -> f64 {
        self.h.iter().map(|h| 2.0 / (h * h)).sum()
    }

    /// Smallest eigenvalue of the discrete Dirichlet `-Laplacian`, in closed
    /// form. Used as a cross-check for the numerical estimate.
    pub fn laplacian_min_eigenvalue(&self) -> f64 {
        self.n
            .iter()
            .zip(&self.h)
            .map(|(&n, &h)| {
                let s = (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
                4.0 * s * s / (h * h)
            })
            .sum()
    }
}

/// Real values at the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.dof() {
            return Err(Error::LengthMismatch {
                expected: grid.dof(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(GridFunction { grid, values })
    }

    /// Skips the finiteness scan; length must already match.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.dof());
        GridFunction { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.dof();
        GridFunction::from_raw(grid, vec![0.0; n])
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.dof()).map(|i| f(&grid.node(i))).collect();
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if *self.grid == *grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub(crate) fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, b: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        Ok(self.lincomb_unchecked(a, b, other))
    }

    pub(crate) fn lincomb_unchecked(&self, a: f64, b: f64, other: &GridFunction) -> GridFunction {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GridFunction::from_raw(self.grid.clone(), values)
    }

    /// `self - other`.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        Ok(self.map_with(other, |x, y| x - y))
    }

    /// `self + other`.
    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        Ok(self.map_with(other, |x, y| x + y))
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_raw(self.grid.clone(), self.values.iter().map(|&x| f(x)).collect())
    }

    pub(crate) fn map_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        GridFunction::from_raw(self.grid.clone(), values)
    }

    /// Largest absolute nodal value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The inner product used to measure gradients. `Au` carries its base
/// function `u` (the `beta |u|^2` weight).
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    L2,
    H1,
    A0,
    Au(&'a GridFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    L2,
    H1,
    A0,
    Au,
}

impl Metric<'_> {
    pub fn kind(&self) -> MetricKind {
        match self {
            Metric::L2 => MetricKind::L2,
            Metric::H1 => MetricKind::H1,
            Metric::A0 => MetricKind::A0,
            Metric::Au(_) => MetricKind::Au,
        }
    }

    pub(crate) fn check(&self, problem: &Problem) -> Result<()> {
        if let Metric::Au(base) = self {
            base.check_grid(problem.grid())?;
        }
        Ok(())
    }

    /// Zeroth-order weight at node `i`: 0, `V_i` or `V_i + beta base_i^2`.
    /// `None` for the pure L2 metric (which has no stiffness part).
    pub(crate) fn weights(&self, problem: &Problem) -> Option<Vec<f64>> {
        match self {
            Metric::L2 => None,
            Metric::H1 => Some(vec![0.0; problem.grid().dof()]),
            Metric::A0 => Some(problem.potential().values().to_vec()),
            Metric::Au(base) => Some(
                problem
                    .potential()
                    .values()
                    .iter()
                    .zip(base.values())
                    .map(|(v, b)| v + problem.beta() * (b * b))
                    .collect(),
            ),
        }
    }
}

/// `out = -Laplacian(u)` over raw interior values.
pub(crate) fn neg_laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let [n0, n1, n2] = grid.shape3();
    let [c0, c1, c2] = grid.inv_h2_3();
    let s0 = n1 * n2;
    for i in 0..n0 {
        for j in 0..n1 {
            let row = (i * n1 + j) * n2;
            for k in 0..n2 {
                let idx = row + k;
                let c = u[idx];
                let mut acc = 0.0;
                {
                    let l = if k > 0 { u[idx - 1] } else { 0.0 };
                    let r = if k + 1 < n2 { u[idx + 1] } else { 0.0 };
                    acc += c2 * (2.0 * c - l - r);
                }
                if c1 != 0.0 {
                    let l = if j > 0 { u[idx - n2] } else { 0.0 };
                    let r = if j + 1 < n1 { u[idx + n2] } else { 0.0 };
                    acc += c1 * (2.0 * c - l - r);
                }
                if c0 != 0.0 {
                    let l = if i > 0 { u[idx - s0] } else { 0.0 };
                    let r = if i + 1 < n0 { u[idx + s0] } else { 0.0 };
                    acc += c0 * (2.0 * c - l - r);
                }
                out[idx] = acc;
            }
        }
    }
}

/// `sum_axes h_k^-2 sum_edges (du)(dv)`, boundary edges included. The
/// per-edge product commutes, so the result is bitwise symmetric in `u, v`.
pub(crate) fn edge_sum(grid: &Grid, u: &[f64], v: &[f64]) -> f64 {
    let [n0, n1, n2] = grid.shape3();
    let c = grid.inv_h2_3();
    let shape = [n0, n1, n2];
    let strides = [n1 * n2, n2, 1];
    let mut total = 0.0;
    for axis in 0..3 {
        if c[axis] == 0.0 {
            continue;
        }
        let n = shape[axis];
        let s = strides[axis];
        let mut acc = 0.0;
        for idx in 0..u.len() {
            let pos = (idx / s) % n;
            // edge to the left neighbour (or the boundary)
            let (ul, vl) = if pos > 0 { (u[idx - s], v[idx - s]) } else { (0.0, 0.0) };
            acc += (u[idx] - ul) * (v[idx] - vl);
            if pos + 1 == n {
                acc += u[idx] * v[idx];
            }
        }
        total += c[axis] * acc;
    }
    total
}

/// Raw weighted Euclidean sum `sum_i w_i (u_i v_i)`.
fn weighted_sum(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(u).zip(v).map(|((w, a), b)| w * (a * b)).sum()
}

fn plain_sum(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `apply_neg_laplacian`: second-order central differences with zero
/// Dirichlet data.
pub fn apply_neg_laplacian(grid: &Grid, u: &GridFunction) -> Result<GridFunction> {
    u.check_grid(grid)?;
    let mut out = vec![0.0; u.len()];
    neg_laplacian_into(grid, u.values(), &mut out);
    Ok(GridFunction::from_raw(u.grid().clone(), out))
}

/// Discrete L2 inner product `(prod h) sum u_i v_i`.
pub fn inner_l2(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.check_same(v)?;
    Ok(u.grid().cell_volume() * plain_sum(u.values(), v.values()))
}

pub fn norm_l2(u: &GridFunction) -> f64 {
    (u.grid().cell_volume() * plain_sum(u.values(), u.values())).sqrt()
}

/// Inner product of `metric`. The H1 part is the edge-difference sum (the
/// summation-by-parts form of `(Lu, v)_L2`).
pub fn inner(metric: Metric<'_>, problem: &Problem, u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.check_grid(problem.grid())?;
    v.check_grid(problem.grid())?;
    metric.check(problem)?;
    Ok(inner_unchecked(metric, problem, u.values(), v.values()))
}

pub(crate) fn inner_unchecked(metric: Metric<'_>, problem: &Problem, u: &[f64], v: &[f64]) -> f64 {
    let grid = problem.grid();
    let vol = grid.cell_volume();
    match metric {
        Metric::L2 => vol * plain_sum(u, v),
        Metric::H1 => vol * edge_sum(grid, u, v),
        Metric::A0 => vol * (edge_sum(grid, u, v) + weighted_sum(problem.potential().values(), u, v)),
        Metric::Au(base) => {
            let beta = problem.beta();
            let w: f64 = problem
                .potential()
                .values()
                .iter()
                .zip(base.values())
                .zip(u.iter().zip(v))
                .map(|((p, b), (x, y))| (p + beta * (b * b)) * (x * y))
                .sum();
            vol * (edge_sum(grid, u, v) + w)
        }
    }
}

pub fn norm(metric: Metric<'_>, problem: &Problem, u: &GridFunction) -> Result<f64> {
    Ok(inner(metric, problem, u, u)?.sqrt())
}

pub(crate) fn norm_unchecked(metric: Metric<'_>, problem: &Problem, u: &[f64]) -> f64 {
    inner_unchecked(metric, problem, u, u).sqrt()
}
