//! The full verification battery behind `verify-operator`.

use std::f64::consts::PI;

use serde::Serialize;

use super::verify::{
    bulk_spike, boundary_spike, gaussian_pair, spike_response, trial_rng, verify_contraction, verify_delta_asymptotics,
    verify_jensen, verify_max_principle, verify_smoothing, AsymptoticsReport, CheckReport, SmoothingReport,
};
use super::BulkSurfaceOperator;
use crate::error::Result;
use crate::geometry::{Grid, StatePair};
use crate::potentials::{MonotoneGraph, Perturbation, PotentialPair, Side};

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Largest δ of the halving sequence for the asymptotics check.
    pub asymptotics_start: f64,
    pub asymptotics_levels: usize,
    pub smoothing_delta: f64,
    pub smoothing_m: usize,
    /// Grids `(nx, ny)` of the refinement study, coarse to fine.
    pub refinement: Vec<(usize, usize)>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 17,
            lx: 1.0,
            ly: 1.0,
            deltas: vec![0.01, 0.1, 1.0],
            epsilons: vec![0.0, 0.1, 1.0],
            trials: 200,
            seed: 0,
            asymptotics_start: 0.004,
            asymptotics_levels: 6,
            smoothing_delta: 0.1,
            smoothing_m: 2,
            refinement: vec![(16, 9), (32, 17), (64, 33)],
        }
    }
}

/// Labelled per-case reports.
pub type Tables<T> = Vec<(String, T)>;

/// Allowed growth of the `m`-fold spike response across the refinement.
pub const SMOOTHING_GROWTH_MAX: f64 = 1.5;
/// Growth the identity (`m = 0`) must show across the same refinement.
pub const IDENTITY_GROWTH_MIN: f64 = 4.0;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub contraction: Vec<CheckReport>,
    pub max_principle: Vec<CheckReport>,
    pub asymptotics: Vec<CheckReport>,
    pub smoothing: Vec<CheckReport>,
    pub jensen: Vec<CheckReport>,
    pub asymptotics_tables: Vec<(String, AsymptoticsReport)>,
    pub smoothing_tables: Vec<(String, SmoothingReport)>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn all(&self) -> impl Iterator<Item = &CheckReport> {
        self.contraction
            .iter()
            .chain(&self.max_principle)
            .chain(&self.asymptotics)
            .chain(&self.smoothing)
            .chain(&self.jensen)
    }
}

fn sin_mode(grid: &Grid) -> Result<StatePair> {
    let x = (0..grid.n_bulk())
        .map(|n| {
            let (x, y) = grid.coords(n);
            (2.0 * PI * x / grid.lx()).sin() * (PI * y / grid.ly()).cos()
        })
        .collect();
    StatePair::from_bulk(grid, x)
}

pub fn contraction_checks(o: &SuiteOptions) -> Result<Vec<CheckReport>> {
    let grid = Grid::strip(o.nx, o.ny, o.lx, o.ly)?;
    let mut out = Vec::new();
    for &eps in &o.epsilons {
        let op = BulkSurfaceOperator::assemble(&grid, eps)?;
        for &d in &o.deltas {
            out.extend(verify_contraction(&op, d, o.trials, o.seed)?);
        }
    }
    Ok(out)
}

pub fn max_principle_checks(o: &SuiteOptions) -> Result<Vec<CheckReport>> {
    let grid = Grid::strip(o.nx, o.ny, o.lx, o.ly)?;
    let mut out = Vec::new();
    for &eps in &o.epsilons {
        let op = BulkSurfaceOperator::assemble(&grid, eps)?;
        for &d in &o.deltas {
            for (c1, c2) in [(1.0, 0.5), (-0.3, 0.2)] {
                out.push(verify_max_principle(&op, d, c1, c2, o.trials, o.seed)?);
            }
            // constants are fixed points, so the bound is attained
            let c = 0.75;
            let fixed = op.resolvent(d, &StatePair::constant(&grid, c), 1)?;
            let err = fixed.x.iter().chain(&fixed.y).fold(0.0_f64, |a, v| a.max((v - c).abs()));
            out.push(CheckReport::at_most(format!("max_principle_equality[delta={d},eps={eps}]"), err, 1e-12));
        }
    }
    Ok(out)
}

pub fn asymptotics_checks(o: &SuiteOptions) -> Result<(Vec<CheckReport>, Tables<AsymptoticsReport>)> {
    let grid = Grid::strip(o.nx, o.ny, o.lx, o.ly)?;
    let deltas: Vec<f64> = (0..o.asymptotics_levels).map(|k| o.asymptotics_start / 2f64.powi(k as i32)).collect();
    let smooth = sin_mode(&grid)?;
    let rough = gaussian_pair(&grid, &mut trial_rng(o.seed, 0));
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    for &eps in &o.epsilons {
        let op = BulkSurfaceOperator::assemble(&grid, eps)?;
        let s = verify_delta_asymptotics(&op, &smooth, &deltas)?;
        let worst = s.ratios.iter().fold(0.0_f64, |a, r| a.max((r - 0.5).abs() / 0.5));
        checks.push(
            CheckReport::new(format!("asymptotics_smooth[eps={eps}]"), worst, 0.2, s.decreasing && s.first_order)
                .with_detail(format!("error ratios {:?}", s.ratios)),
        );
        tables.push((format!("smooth_eps={eps}"), s));
        let r = verify_delta_asymptotics(&op, &rough, &deltas)?;
        let worst = r.ratios.iter().copied().fold(0.0_f64, f64::max);
        checks.push(
            CheckReport::new(format!("asymptotics_rough[eps={eps}]"), worst, 1.0, r.decreasing)
                .with_detail("strictly decreasing errors"),
        );
        tables.push((format!("rough_eps={eps}"), r));
    }
    Ok((checks, tables))
}

fn max_spike(op: &BulkSurfaceOperator, delta: f64, m: usize) -> Result<f64> {
    let g = op.grid();
    let mid = g.ny() / 2;
    let mut worst = 0.0_f64;
    for s in [bulk_spike(g, g.bulk_index(0, mid)), boundary_spike(g, 0)] {
        worst = worst.max(spike_response(op, delta, m, &s)?);
    }
    Ok(worst)
}

pub fn smoothing_checks(o: &SuiteOptions) -> Result<(Vec<CheckReport>, Tables<SmoothingReport>)> {
    let (d, m) = (o.smoothing_delta, o.smoothing_m);
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    for &eps in o.epsilons.iter().filter(|&&e| e <= 0.1) {
        let mut smoothed = Vec::new();
        let mut identity = Vec::new();
        for &(nx, ny) in &o.refinement {
            let op = BulkSurfaceOperator::assemble(&Grid::strip(nx, ny, o.lx, o.ly)?, eps)?;
            let rep = verify_smoothing(&op, d, m, o.trials.min(20), o.seed)?;
            checks.push(CheckReport::at_most(
                format!("smoothing_position_spread[{nx}x{ny},m={m},eps={eps}]"),
                rep.spread - 1.0,
                0.05,
            ));
            smoothed.push(max_spike(&op, d, m)?);
            identity.push(max_spike(&op, d, 0)?);
            tables.push((format!("{nx}x{ny}_eps={eps}"), rep));
        }
        let (first, last) = (0, smoothed.len() - 1);
        let growth = smoothed[last] / smoothed[first];
        checks.push(
            CheckReport::at_most(format!("smoothing_grid_growth[m={m},eps={eps}]"), growth, SMOOTHING_GROWTH_MAX)
                .with_detail(format!("max spike response per grid {smoothed:?}")),
        );
        let growth0 = identity[last] / identity[first];
        checks.push(
            CheckReport::new(format!("identity_grid_growth[m=0,eps={eps}]"), growth0, IDENTITY_GROWTH_MIN, growth0 >= IDENTITY_GROWTH_MIN)
                .with_detail(format!("max spike response per grid {identity:?}; must reach the tolerance")),
        );
    }
    Ok((checks, tables))
}

pub fn jensen_checks(o: &SuiteOptions) -> Result<Vec<CheckReport>> {
    let grid = Grid::strip(o.nx, o.ny, o.lx, o.ly)?;
    let quad = PotentialPair::new(MonotoneGraph::Linear { a: 1.0 }, Perturbation::Zero, Side::Bulk)?;
    let quartic = PotentialPair::quartic(Side::Bulk);
    let mut out = Vec::new();
    for &eps in &o.epsilons {
        let op = BulkSurfaceOperator::assemble(&grid, eps)?;
        for pot in [&quad, &quartic] {
            out.push(verify_jensen(&op, 0.1, pot, o.trials.min(20), o.seed)?);
        }
    }
    Ok(out)
}

pub fn run_suite(o: &SuiteOptions) -> Result<SuiteReport> {
    let contraction = contraction_checks(o)?;
    let max_principle = max_principle_checks(o)?;
    let (asymptotics, asymptotics_tables) = asymptotics_checks(o)?;
    let (smoothing, smoothing_tables) = smoothing_checks(o)?;
    let jensen = jensen_checks(o)?;
    let mut r = SuiteReport {
        contraction,
        max_principle,
        asymptotics,
        smoothing,
        jensen,
        asymptotics_tables,
        smoothing_tables,
        passed: false,
    };
    let passed = r.all().all(|c| c.passed);
    r.passed = passed;
    Ok(r)
}
