//! End-to-end checks of converged runs against independently computed
//! reference values.

use std::sync::Arc;

use gpflow_core::{
    cross_scheme_agreement, gamma, linearized_spectrum, norm, riemannian_gradient, run, Grid, Init, Potential,
    Problem, RunConfig, SchemeKind, SolverConfig, Status,
};
use nalgebra::{DMatrix, SymmetricEigen};

/// Smallest eigenvalue of the 1D Dirichlet matrix, assembled by hand and
/// diagonalized densely.
fn dense_lambda0(n: usize) -> f64 {
    let h = 1.0 / (n as f64 + 1.0);
    let c = 1.0 / (h * h);
    let m = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * c,
        1 => -c,
        _ => 0.0,
    });
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn problem_1d(n: usize, potential: &Potential, beta: f64) -> Problem {
    let grid = Arc::new(Grid::unit(1, n).unwrap());
    Problem::new(potential.sample(&grid).unwrap(), beta).unwrap()
}

#[test]
fn linear_problem_gamma_matches_dense_eigenvalue() {
    let lambda0 = dense_lambda0(127);
    let p = problem_1d(127, &Potential::Zero, 0.0);
    let cfg = SolverConfig::default();
    let mut finals = Vec::new();
    for kind in SchemeKind::ALL {
        let rep = run(
            &p,
            &RunConfig {
                init: Init::Random,
                seed: 17,
                ..RunConfig::new(kind)
            },
        )
        .unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!((rep.lambda() - lambda0).abs() <= 1e-8 * lambda0, "{kind}: {}", rep.lambda());
        finals.push(rep.final_u);
    }
    // every scheme's multiplier at one converged state
    let g: Vec<f64> = SchemeKind::ALL.iter().map(|&k| gamma(k, &p, &finals[0], &cfg).unwrap()).collect();
    for a in &g {
        assert!((a - g[0]).abs() <= 1e-6);
    }
}

#[test]
fn riemannian_gradient_vanishes_at_converged_state() {
    let p = problem_1d(255, &Potential::Zero, 100.0);
    let cfg = SolverConfig::default();
    let rep = run(&p, &RunConfig::new(SchemeKind::Au)).unwrap();
    assert!(rep.converged());
    for kind in SchemeKind::ALL {
        let g = riemannian_gradient(kind, &p, &rep.final_u, &cfg).unwrap();
        let r = norm(kind.metric(&rep.final_u), &p, &g).unwrap();
        assert!(r <= 1e-8, "{kind}: {r:e}");
    }
}

#[test]
fn linearized_ground_state_is_the_converged_state() {
    let harmonic = Potential::Harmonic { omega: 20.0 };
    let p = problem_1d(255, &harmonic, 10.0);
    let rep = run(&p, &RunConfig::new(SchemeKind::A0)).unwrap();
    let s = linearized_spectrum(&p, &rep.final_u, 1e-10).unwrap();
    let d = s.v0.sub(&rep.final_u).unwrap();
    assert!(gpflow_core::norm_l2(&d) <= 1e-6);
    assert!((rep.lambda() - s.lambda0).abs() <= 1e-6 * s.lambda0);
    assert!(s.lambda1 > s.lambda0);
}

#[test]
fn cross_scheme_agreement_examples() {
    let cases = [
        (problem_1d(127, &Potential::Zero, 0.0), Init::Random),
        (problem_1d(255, &Potential::Zero, 100.0), Init::DefaultBump),
        (
            problem_1d(255, &Potential::Harmonic { omega: 200f64.sqrt() }, 50.0),
            Init::DefaultBump,
        ),
    ];
    for (p, init) in cases {
        let cfg = RunConfig {
            init,
            seed: 3,
            ..RunConfig::new(SchemeKind::H1)
        };
        let r = cross_scheme_agreement(&p, &cfg).unwrap();
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn two_dimensional_run_matches_between_schemes() {
    let grid = Arc::new(Grid::unit(2, 31).unwrap());
    let p = Problem::new(Potential::Harmonic { omega: 20.0 }.sample(&grid).unwrap(), 50.0).unwrap();
    let r = cross_scheme_agreement(&p, &RunConfig::new(SchemeKind::H1)).unwrap();
    assert!(r.passed, "{r:?}");
}
