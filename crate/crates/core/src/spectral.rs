//! The linearized eigenproblem `(L + V + beta u*^2) v = lambda v`, the
//! eigengap factor, the discrete Poincare constant and contraction-rate fits.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::flows::sign_normalize;
use crate::greens::{LinearOperator, SolverConfig};
use crate::grid::{Grid, GridFunction, Metric};
use crate::random::{derived_rng, smoothed_noise};

/// Above this many unknowns the eigenpairs come from block inverse
/// iteration instead of a dense eigensolve.
pub const DENSE_LIMIT: usize = 512;

/// Smallest admissible `lambda1 - lambda0`.
pub const GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    InverseIteration,
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub lambda0: f64,
    pub lambda1: f64,
    pub gap_factor: f64,
    /// Ground eigenvector, unit L2, non-negative mean.
    pub v0: GridFunction,
    /// Second eigenvector, unit L2 and L2-orthogonal to `v0`.
    pub v1: GridFunction,
    /// `||A v - lambda v||_L2` for both pairs.
    pub residuals: [f64; 2],
    pub method: EigenMethod,
    pub iterations: usize,
}

impl SpectralReport {
    pub fn gap(&self) -> f64 {
        self.lambda1 - self.lambda0
    }
}

/// `min{1, (lambda1 - lambda0) / (4 lambda0)}`.
pub fn gap_factor(lambda0: f64, lambda1: f64) -> f64 {
    ((lambda1 - lambda0) / (4.0 * lambda0)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rho: f64,
    pub r_squared: f64,
    /// First and last index (inclusive) of the fitted window.
    pub window: (usize, usize),
}

/// The a_u operator at `ustar`: `L + diag(V) + beta diag(ustar^2)`.
pub fn linearized_operator(problem: &Problem, ustar: &GridFunction) -> Result<LinearOperator> {
    ustar.check_grid(problem.grid())?;
    LinearOperator::new(Metric::Au(ustar), problem)
}

fn l2_dot(vol: f64, a: &[f64], b: &[f64]) -> f64 {
    vol * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn residual_norm(op: &LinearOperator, v: &[f64], lambda: f64) -> f64 {
    let mut av = vec![0.0; v.len()];
    op.apply_into(v, &mut av);
    let r: Vec<f64> = av.iter().zip(v).map(|(a, x)| a - lambda * x).collect();
    l2_dot(op.grid().cell_volume(), &r, &r).sqrt()
}

/// The two smallest eigenpairs of `op`. Eigenvectors are L2-normalized; the
/// residual requirement is `||A v - lambda v||_L2 <= tol * lambda`.
pub fn lowest_two_eigen(op: &LinearOperator, tol: f64) -> Result<SpectralReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("eigen tolerance must be positive, got {tol}")));
    }
    let dof = op.dof();
    if dof < 2 {
        return Err(Error::InsufficientData("need at least two unknowns for two eigenpairs".into()));
    }
    let (lams, vecs, method, iterations) = if dof <= DENSE_LIMIT {
        let (l, v) = dense_lowest(op, 2);
        (l, v, EigenMethod::Dense, 0)
    } else {
        let (l, v, it) = block_inverse_iteration(op, tol)?;
        (l, v, EigenMethod::InverseIteration, it)
    };
    let grid = op.grid().clone();
    let vol = grid.cell_volume();
    let normalize = |v: Vec<f64>| -> Vec<f64> {
        let n = l2_dot(vol, &v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    };
    let v0 = sign_normalize(&GridFunction::from_raw(grid.clone(), normalize(vecs[0].clone())));
    let v1 = sign_normalize(&GridFunction::from_raw(grid.clone(), normalize(vecs[1].clone())));
    let (lambda0, lambda1) = (lams[0], lams[1]);
    let residuals = [
        residual_norm(op, v0.values(), lambda0),
        residual_norm(op, v1.values(), lambda1),
    ];
    for (r, l) in residuals.iter().zip([lambda0, lambda1]) {
        if !(*r <= tol * l) {
            return Err(Error::EigenNotConverged {
                iterations,
                residual: *r,
            });
        }
    }
    if lambda1 - lambda0 < GAP_FLOOR {
        return Err(Error::GapDegenerate { lambda0, lambda1 });
    }
    Ok(SpectralReport {
        lambda0,
        lambda1,
        gap_factor: gap_factor(lambda0, lambda1),
        v0,
        v1,
        residuals,
        method,
        iterations,
    })
}

fn dense_lowest(op: &LinearOperator, count: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = op.dof();
    let m = DMatrix::from_row_slice(n, n, &op.to_dense());
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lams = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..count]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (lams, vecs)
}

/// Block inverse iteration with Rayleigh-Ritz. The block is wider than two
/// so that (near-)degenerate second eigenvalues, common on symmetric boxes,
/// converge at the rate `lambda_1 / lambda_p` of the first excluded pair.
/// Every column is kept L2-orthogonal to the ones before it, so the second
/// Ritz vector is deflated against the first.
fn block_inverse_iteration(op: &LinearOperator, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    const BLOCK: usize = 6;
    const MAX_SWEEPS: usize = 500;
    let n = op.dof();
    let p = BLOCK.min(n);
    let vol = op.grid().cell_volume();
    let grid = op.grid().clone();
    let cfg = SolverConfig::default();

    let mut block: Vec<Vec<f64>> = (0..p).map(|j| start_vector(&grid, j)).collect();
    let mut theta = vec![1.0; p];
    orthonormalize(&mut block, vol);

    for sweep in 1..=MAX_SWEEPS {
        let mut next = Vec::with_capacity(p);
        for (v, t) in block.iter().zip(&theta) {
            let guess: Vec<f64> = v.iter().map(|x| x / t).collect();
            next.push(op.solve_raw(v, Some(&guess), &cfg)?);
        }
        orthonormalize(&mut next, vol);
        let (t, rotated) = rayleigh_ritz(op, &next, vol);
        block = rotated;
        theta = t;
        let res: Vec<f64> = (0..2).map(|j| residual_norm(op, &block[j], theta[j])).collect();
        if res[0] <= 0.1 * tol * theta[0] && res[1] <= 0.1 * tol * theta[1] {
            return Ok((theta[..2].to_vec(), block[..2].to_vec(), sweep));
        }
    }
    let residual = residual_norm(op, &block[1], theta[1]);
    Err(Error::EigenNotConverged {
        iterations: MAX_SWEEPS,
        residual,
    })
}

/// Seeded smooth noise: deterministic, and with no symmetry that could
/// hide an eigenvector from the block.
fn start_vector(grid: &Arc<Grid>, j: usize) -> Vec<f64> {
    let mut rng = derived_rng(j as u64, "inverse-iteration-start");
    smoothed_noise(grid, &mut rng).into_values()
}

/// Modified Gram-Schmidt in the discrete L2 inner product, twice.
fn orthonormalize(block: &mut [Vec<f64>], vol: f64) {
    for _ in 0..2 {
        for j in 0..block.len() {
            for i in 0..j {
                let c = l2_dot(vol, &block[j], &block[i]);
                let (head, tail) = block.split_at_mut(j);
                for (x, y) in tail[0].iter_mut().zip(&head[i]) {
                    *x -= c * y;
                }
            }
            let nrm = l2_dot(vol, &block[j], &block[j]).sqrt();
            for x in block[j].iter_mut() {
                *x /= nrm;
            }
        }
    }
}

/// Ritz values (ascending) and vectors of `op` on the span of an
/// L2-orthonormal block.
fn rayleigh_ritz(op: &LinearOperator, block: &[Vec<f64>], vol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = block.len();
    let n = op.dof();
    let applied: Vec<Vec<f64>> = block
        .iter()
        .map(|v| {
            let mut out = vec![0.0; n];
            op.apply_into(v, &mut out);
            out
        })
        .collect();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = l2_dot(vol, &block[i], &applied[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let theta = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let rotated = order
        .iter()
        .map(|&k| {
            let mut v = vec![0.0; n];
            for (i, b) in block.iter().enumerate() {
                let c = eig.eigenvectors[(i, k)];
                for (x, y) in v.iter_mut().zip(b) {
                    *x += c * y;
                }
            }
            v
        })
        .collect();
    (theta, rotated)
}

/// Smallest eigenvalue of the 1D Dirichlet operator with `n` nodes and
/// spacing `h`, by a dense symmetric eigensolve.
fn tridiagonal_min_eigenvalue(n: usize, h: f64) -> f64 {
    let c = 1.0 / (h * h);
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * c
        } else if i.abs_diff(j) == 1 {
            -c
        } else {
            0.0
        }
    });
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Sharp discrete Poincare constant `C3 = 1 / sqrt(lambda_min(L))`. The
/// Laplacian is a Kronecker sum of 1D operators, so `lambda_min` is the sum
/// of the per-axis minima.
pub fn estimate_poincare(grid: &Grid) -> f64 {
    let lmin: f64 = grid
        .n()
        .iter()
        .zip(grid.h())
        .map(|(&n, &h)| tridiagonal_min_eigenvalue(n, h))
        .sum();
    1.0 / lmin.sqrt()
}

/// Least-squares fit of `log delta_n = a + n log(rho)` over the longest run
/// of trailing entries with `0 < delta_n < threshold`.
pub fn fit_rate(deltas: &[f64], threshold: f64) -> Result<RateFit> {
    let ok = |d: f64| d > 0.0 && d < threshold && d.is_finite();
    let mut end = deltas.len();
    while end > 0 && !ok(deltas[end - 1]) {
        end -= 1;
    }
    let mut start = end;
    while start > 0 && ok(deltas[start - 1]) {
        start -= 1;
    }
    if end - start < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 trailing entries below {threshold:e}, found {}",
            end - start
        )));
    }
    let xs: Vec<f64> = (start..end).map(|i| i as f64).collect();
    let ys: Vec<f64> = deltas[start..end].iter().map(|d| d.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy <= f64::EPSILON * ys.iter().map(|y| y * y).sum::<f64>() {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        rho: slope.exp(),
        r_squared,
        window: (start, end - 1),
    })
}

/// Convenience: spectral report of the linearized operator at `ustar`.
pub fn linearized_spectrum(problem: &Problem, ustar: &GridFunction, tol: f64) -> Result<SpectralReport> {
    lowest_two_eigen(&linearized_operator(problem, ustar)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn free_op(dim: usize, n: usize) -> (Problem, LinearOperator) {
        let g = Arc::new(Grid::unit(dim, n).unwrap());
        let p = Problem::free(g.clone(), 0.0).unwrap();
        let u = GridFunction::zeros(g);
        let op = linearized_operator(&p, &u).unwrap();
        (p, op)
    }

    #[test]
    fn three_node_pairs() {
        let (_, op) = free_op(1, 3);
        let r = lowest_two_eigen(&op, 1e-10).unwrap();
        assert!((r.lambda0 - 9.372583002030478).abs() < 1e-12);
        assert!((r.lambda1 - 32.0).abs() < 1e-12);
        assert_eq!(r.method, EigenMethod::Dense);
    }

    #[test]
    fn continuum_limit_1d() {
        let (_, op) = free_op(1, 127);
        let r = lowest_two_eigen(&op, 1e-10).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((r.lambda0 - pi2).abs() < 5e-3);
        assert!((r.lambda1 - 4.0 * pi2).abs() < 2e-2);
        assert!((r.gap_factor - 0.75).abs() < 1e-3);
    }

    #[test]
    fn inverse_iteration_matches_closed_form_2d() {
        // 24^2 = 576 unknowns, above the dense limit
        let (_, op) = free_op(2, 24);
        let r = lowest_two_eigen(&op, 1e-10).unwrap();
        assert_eq!(r.method, EigenMethod::InverseIteration);
        let h: f64 = 1.0 / 25.0;
        let lam = |k: f64| 4.0 / (h * h) * (k * std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((r.lambda0 - 2.0 * lam(1.0)).abs() < 1e-8 * r.lambda0);
        assert!((r.lambda1 - (lam(1.0) + lam(2.0))).abs() < 1e-8 * r.lambda1);
        assert!(r.residuals[0] <= 1e-10 * r.lambda0);
    }

    #[test]
    fn inverse_iteration_agrees_with_dense_on_nonlinear_operator() {
        let g = Arc::new(Grid::new(&[23, 23], &[(0.0, 1.0), (0.0, 1.5)]).unwrap());
        let v = GridFunction::from_fn(g.clone(), |x| 40.0 * (x[0] - 0.3).powi(2) + 10.0 * x[1]).unwrap();
        let p = Problem::new(v, 30.0).unwrap();
        let u = crate::energy::retract(&GridFunction::from_fn(g.clone(), |x| x[0] * (1.0 - x[0]) * x[1] * (1.5 - x[1])).unwrap()).unwrap();
        let op = linearized_operator(&p, &u).unwrap();
        let it = lowest_two_eigen(&op, 1e-10).unwrap();
        let (dl, _) = dense_lowest(&op, 2);
        assert_eq!(it.method, EigenMethod::InverseIteration);
        assert!((it.lambda0 - dl[0]).abs() < 1e-9 * dl[0]);
        assert!((it.lambda1 - dl[1]).abs() < 1e-9 * dl[1]);
    }

    #[test]
    fn eigenpair_residual_on_linearized_operator() {
        let g = Arc::new(Grid::unit(1, 63).unwrap());
        let v = GridFunction::from_fn(g.clone(), |x| 50.0 * (x[0] - 0.5).powi(2)).unwrap();
        let p = Problem::new(v, 10.0).unwrap();
        let u = crate::energy::retract(&GridFunction::from_fn(g.clone(), |x| (std::f64::consts::PI * x[0]).sin()).unwrap()).unwrap();
        let op = linearized_operator(&p, &u).unwrap();
        let r = lowest_two_eigen(&op, 1e-10).unwrap();
        let av = op.apply(&r.v0).unwrap();
        let diff = av.lincomb(1.0, -r.lambda0, &r.v0).unwrap();
        assert!(crate::grid::norm_l2(&diff) <= 1e-8 * r.lambda0);
    }

    #[test]
    fn poincare_examples() {
        let g3 = Grid::unit(1, 3).unwrap();
        assert!((estimate_poincare(&g3) - 1.0 / 9.372583002030478f64.sqrt()).abs() < 1e-12);
        assert!((estimate_poincare(&g3) - 0.32664).abs() < 1e-5);
        let g = Grid::unit(1, 127).unwrap();
        assert!((estimate_poincare(&g) - 1.0 / std::f64::consts::PI).abs() < 1e-3);
        let g2 = Grid::unit(2, 31).unwrap();
        assert!((estimate_poincare(&g2) - 1.0 / (std::f64::consts::PI * 2f64.sqrt())).abs() < 1e-2);
        for g in [g3, g, g2] {
            let closed = 1.0 / g.laplacian_min_eigenvalue().sqrt();
            assert!((estimate_poincare(&g) - closed).abs() < 1e-10 * closed);
        }
    }

    #[test]
    fn fit_rate_examples() {
        let geo: Vec<f64> = (0..30).map(|n| 0.5f64.powi(n)).collect();
        let f = fit_rate(&geo, 10.0).unwrap();
        assert!((f.rho - 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.window, (0, 29));

        let mut rng = crate::random::derived_rng(3, "fit");
        let noisy: Vec<f64> = (0..60)
            .map(|n| 0.9f64.powi(n) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            .collect();
        assert!((fit_rate(&noisy, 10.0).unwrap().rho - 0.9).abs() < 0.02);

        let flat = vec![0.3; 10];
        let f = fit_rate(&flat, 1.0).unwrap();
        assert!((f.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_window_and_errors() {
        let mut d: Vec<f64> = (0..20).map(|n| 0.8f64.powi(n)).collect();
        d.push(0.0);
        let f = fit_rate(&d, 0.5).unwrap();
        // 0.8^4 = 0.4096 is the first entry below 0.5; the trailing zero is dropped
        assert_eq!(f.window, (4, 19));
        assert!(matches!(fit_rate(&d[..6], 0.5), Err(Error::InsufficientData(_))));
    }
}
