use super::*;
use crate::potentials::{MonotoneGraph, Perturbation};
use crate::solver::InitialProfile;

fn small() -> SolverConfig {
    let mut c = SolverConfig::new(Grid::strip(8, 5, 1.0, 1.0).unwrap());
    c.t_final = 0.02;
    c.noise.n_modes_bulk = 4;
    c.noise.n_modes_boundary = 4;
    c.noise.sigma0 = 0.5;
    c.initial = InitialProfile::Sin { amplitude: 0.8, kx: 1, ky: 1 };
    c
}

#[test]
fn deterministic_runs_have_zero_standard_error() {
    let mut c = small();
    c.noise.sigma0 = 0.0;
    let est = mc_expectation(&c, 3, Statistic::SupNormSq, 1).unwrap();
    assert_eq!(est.std_error, 0.0);
    let est = mc_expectation(&small(), 4, Statistic::Constant, 1).unwrap();
    assert_eq!((est.mean, est.std_error), (1.0, 0.0));
    assert!(mc_expectation(&c, 1, Statistic::Constant, 1).is_err());
}

#[test]
fn zero_graph_lambda_sweep_is_flat() {
    let mut c = small();
    c.gamma.bulk.beta = MonotoneGraph::Zero;
    c.gamma.boundary.beta = MonotoneGraph::Zero;
    let r = lambda_sweep(&c, &[0.2, 0.1, 0.05], 3).unwrap();
    assert!(r.distances.iter().all(|&d| d == 0.0), "{:?}", r.distances);
    assert!(r.passed, "{:?}", r.checks);
}

#[test]
fn lambda_sweep_rejects_non_halving_lists() {
    assert!(lambda_sweep(&small(), &[0.2, 0.1], 1).is_err());
    assert!(lambda_sweep(&small(), &[0.2, 0.1, 0.04], 1).is_err());
}

#[test]
fn constant_data_without_noise_ignores_eps() {
    let mut c = small();
    c.noise.sigma0 = 0.0;
    c.initial = InitialProfile::Constant(0.3);
    let r = eps_sweep(&c, &[0.1, 0.05, 0.0], 2).unwrap();
    assert!(r.distances.iter().all(|&d| d < 1e-13), "{:?}", r.distances);
    assert!(r.passed, "{:?}", r.checks);
}

#[test]
fn eps_zero_baseline_is_deterministic() {
    let mut c = small();
    c.eps = 0.0;
    let a = solver::run_trajectory(&c, 5).unwrap();
    let b = solver::run_trajectory(&c, 5).unwrap();
    assert_eq!(l2_distance(&c.grid, c.dt, &a, &b).unwrap(), 0.0);
}

#[test]
fn linear_contraction_without_potentials() {
    let mut c = small();
    c.noise.sigma0 = 0.0;
    c.gamma.bulk.beta = MonotoneGraph::Zero;
    c.gamma.boundary.beta = MonotoneGraph::Zero;
    c.gamma.bulk.pi = Perturbation::Zero;
    c.gamma.boundary.pi = Perturbation::Zero;
    let r = continuous_dependence(&c, &[0.0, 1e-3, 1e-2, 1e-1], 2, 4).unwrap();
    assert_eq!(r.distances[0], 0.0);
    let ratios = &r.auxiliary["lipschitz_ratio"];
    // linear problem: ratio independent of δ₀ and the semigroup contracts
    assert!(ratios.iter().all(|&v| (v / ratios[0] - 1.0).abs() < 1e-8));
    assert!(r.passed, "{:?}", r.checks);
    let sup_only = ratios[0];
    assert!(sup_only.is_finite());
}

#[test]
fn continuous_dependence_needs_two_decades() {
    assert!(continuous_dependence(&small(), &[1e-2, 1e-1], 2, 1).is_err());
}

#[test]
fn energy_bound_zero_everything() {
    let mut c = small();
    c.noise.sigma0 = 0.0;
    c.initial = InitialProfile::Constant(0.0);
    let r = energy_bound(&c, &[0.1, 0.05], 2, 1).unwrap();
    assert!(r.lhs.iter().all(|e| e.mean == 0.0));
    assert!(r.passed);
}

#[test]
fn distances_need_dense_saves() {
    let mut c = small();
    c.save_every = 4;
    let a = solver::run_trajectory(&c, 1).unwrap();
    assert!(l2_distance(&c.grid, c.dt, &a, &a).is_err());
}
