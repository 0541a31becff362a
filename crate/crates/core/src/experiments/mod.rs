//! Desk-scale studies: Yosida (λ) convergence, vanishing surface viscosity,
//! continuous dependence on the initial datum, Monte-Carlo statistics and
//! the discrete energy inequality.
//!
//! Runs compared against each other share grid, seed and noise path; the
//! increment checksums recorded by the solver are compared to make sure.

mod sweeps;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use sweeps::{continuous_dependence, eps_sweep, lambda_sweep, perturbation_direction};

use crate::error::{Error, Result};
use crate::geometry::{Grid, StatePair};
use crate::noise::StreamKey;
use crate::operator::verify::CheckReport;
use crate::solver::{self, RunResult, SolverConfig};

/// Worker pool capped by `DYNABC_THREADS` (default: all cores).
pub fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("DYNABC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("DYNABC_THREADS must be a positive integer, got '{v}'")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs one path per key in parallel; results come back in key order.
pub fn run_batch(cfgs: &[(SolverConfig, StreamKey)]) -> Result<Vec<RunResult>> {
    let pool = pool()?;
    let runs: Vec<Result<RunResult>> = pool.install(|| {
        cfgs.par_iter()
            .map(|(cfg, key)| solver::run_path(cfg, *key))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(bad) = runs.iter().find(|r| !r.is_valid()) {
        return Err(Error::TrajectoryFailed {
            trajectory: bad.trajectory,
            message: bad.failure.clone().unwrap_or_default(),
        });
    }
    Ok(runs)
}

/// Plot-ready table written as `tables/<name>.csv`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub experiment: String,
    pub parameter: String,
    pub values: Vec<f64>,
    /// Pathwise distances, one per value (or per consecutive pair).
    pub distances: Vec<f64>,
    pub auxiliary: BTreeMap<String, Vec<f64>>,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
    pub seed: u64,
    pub fingerprint: String,
    pub noise_checksums: Vec<u64>,
    pub runtime_seconds: f64,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl SweepReport {
    pub(crate) fn new(experiment: &str, parameter: &str, values: &[f64], cfg: &SolverConfig, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            parameter: parameter.into(),
            values: values.to_vec(),
            distances: Vec::new(),
            auxiliary: BTreeMap::new(),
            checks: Vec::new(),
            passed: false,
            seed,
            fingerprint: cfg.fingerprint(),
            noise_checksums: Vec::new(),
            runtime_seconds: 0.0,
            tables: Vec::new(),
        }
    }

    pub(crate) fn finish(mut self, started: Instant) -> Self {
        self.passed = self.checks.iter().all(|c| c.passed);
        self.runtime_seconds = started.elapsed().as_secs_f64();
        self
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn states(r: &RunResult) -> impl Iterator<Item = &StatePair> {
    r.saved.iter().map(|s| &s.state)
}

fn require_dense(r: &RunResult) -> Result<()> {
    if r.saved.len() != r.series.len() {
        return Err(Error::Config("pathwise distances need solver.save_every = 1".into()));
    }
    Ok(())
}

/// `‖X − X′‖_{L²(0,T;ℋ)}` by the right-endpoint rule.
pub fn l2_distance(grid: &Grid, dt: f64, a: &RunResult, b: &RunResult) -> Result<f64> {
    require_dense(a)?;
    require_dense(b)?;
    let sum: f64 = states(a)
        .zip(states(b))
        .skip(1)
        .map(|(u, v)| grid.norm_hcal(&u.sub(v)).powi(2))
        .sum();
    Ok((dt * sum).sqrt())
}

/// `‖X − X′‖_{L∞(0,T;ℋ)}`.
pub fn linf_distance(grid: &Grid, a: &RunResult, b: &RunResult) -> Result<f64> {
    require_dense(a)?;
    require_dense(b)?;
    Ok(states(a)
        .zip(states(b))
        .map(|(u, v)| grid.norm_hcal(&u.sub(v)))
        .fold(0.0, f64::max))
}

/// `‖X − X′‖²_{L²(0,T;𝒱_ε)}`.
pub fn l2_v_distance_sq(grid: &Grid, dt: f64, eps: f64, a: &RunResult, b: &RunResult) -> Result<f64> {
    require_dense(a)?;
    require_dense(b)?;
    let sum: f64 = states(a)
        .zip(states(b))
        .skip(1)
        .map(|(u, v)| grid.norm_v_sq(&u.sub(v), eps))
        .sum();
    Ok(dt * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// `supₙ ‖Xⁿ‖²_ℋ`
    SupNormSq,
    /// `ΣₙΔt(‖∇xⁿ‖² + ε‖∇_Γyⁿ‖²)`
    #[serde(rename = "dirichlet")]
    DirichletIntegral,
    /// `ΣₙΔt Σ m (j + j*)`
    DualityMass,
    /// Left side of the discrete energy inequality.
    EnergyLhs,
    /// Always 1; sanity check of the estimator.
    Constant,
}

impl std::str::FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sup-norm-sq" => Ok(Statistic::SupNormSq),
            "dirichlet" => Ok(Statistic::DirichletIntegral),
            "duality-mass" => Ok(Statistic::DualityMass),
            "energy-lhs" => Ok(Statistic::EnergyLhs),
            "constant" => Ok(Statistic::Constant),
            other => Err(Error::Config(format!(
                "unknown statistic '{other}' (sup-norm-sq, dirichlet, duality-mass, energy-lhs, constant)"
            ))),
        }
    }
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Statistic::SupNormSq => "sup-norm-sq",
            Statistic::DirichletIntegral => "dirichlet",
            Statistic::DualityMass => "duality-mass",
            Statistic::EnergyLhs => "energy-lhs",
            Statistic::Constant => "constant",
        })
    }
}

impl Statistic {
    pub fn evaluate(self, r: &RunResult, cfg: &SolverConfig) -> f64 {
        let s = &r.series;
        match self {
            Statistic::SupNormSq => s.norm_h.iter().fold(0.0, |a: f64, v| a.max(v * v)),
            Statistic::DirichletIntegral => (1..s.len())
                .map(|n| cfg.dt * (s.grad_norm[n].powi(2) + cfg.eps * s.surf_grad_norm[n].powi(2)))
                .sum(),
            Statistic::DualityMass => (1..s.len()).map(|n| cfg.dt * s.duality_mass[n]).sum(),
            Statistic::EnergyLhs => solver::energy_lhs(r, cfg),
            Statistic::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub statistic: Statistic,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
    pub values: Vec<f64>,
}

impl McEstimate {
    pub fn from_values(statistic: Statistic, values: Vec<f64>) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        Self {
            statistic,
            samples: values.len(),
            mean,
            std_error: (var / m).sqrt(),
            values,
        }
    }
}

fn sample_keys(cfg: &SolverConfig, seed: u64, m: usize) -> Vec<(SolverConfig, StreamKey)> {
    (0..m as u64).map(|t| (cfg.clone(), StreamKey::new(seed, t))).collect()
}

/// Mean and standard error of a path functional over `m` independent paths
/// (trajectory ids `0..m`); reduction is in trajectory order.
pub fn mc_expectation(cfg: &SolverConfig, m: usize, statistic: Statistic, seed: u64) -> Result<McEstimate> {
    if m < 2 {
        return Err(Error::Config(format!("Monte Carlo needs at least 2 samples, got {m}")));
    }
    let runs = run_batch(&sample_keys(cfg, seed, m))?;
    Ok(McEstimate::from_values(
        statistic,
        runs.iter().map(|r| statistic.evaluate(r, cfg)).collect(),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyBoundReport {
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub lhs: Vec<McEstimate>,
    /// `1 + E‖X⁰‖²_ℋ + T‖ℬ‖²_{L₂}`
    pub rhs: Vec<f64>,
    pub k: Vec<f64>,
    /// Largest `|K_λ/K_ref − 1|`, reference at the first λ.
    pub k_drift: f64,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
    pub seed: u64,
    pub fingerprint: String,
    pub runtime_seconds: f64,
}

/// Tolerated relative drift of the fitted energy constant across λ.
pub const K_DRIFT_TOL: f64 = 0.25;

/// Monte-Carlo check of the discrete energy inequality with a constant `K`
/// fitted at the first λ and required not to drift across the others.
pub fn energy_bound(cfg: &SolverConfig, lambdas: &[f64], m: usize, seed: u64) -> Result<EnergyBoundReport> {
    let started = Instant::now();
    if lambdas.is_empty() || m < 2 {
        return Err(Error::Config("energy bound needs at least one λ and two samples".into()));
    }
    let mut jobs = Vec::new();
    for &l in lambdas {
        let mut c = cfg.clone();
        c.lambda = l;
        jobs.extend(sample_keys(&c, seed, m));
    }
    let runs = run_batch(&jobs)?;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut k = Vec::new();
    let mut negative_pairing = 0usize;
    for (i, chunk) in runs.chunks(m).enumerate() {
        let c = &jobs[i * m].0;
        let est = McEstimate::from_values(
            Statistic::EnergyLhs,
            chunk.iter().map(|r| solver::energy_lhs(r, c)).collect(),
        );
        let x0 = chunk.iter().map(|r| r.series.norm_h[0].powi(2)).sum::<f64>() / m as f64;
        let right = 1.0 + x0 + solver::noise_proxy(c);
        negative_pairing += chunk
            .iter()
            .flat_map(|r| r.series.xi_pairing.iter())
            .filter(|&&v| v < 0.0)
            .count();
        k.push(est.mean / right);
        lhs.push(est);
        rhs.push(right);
    }
    let k_drift = k.iter().map(|v| (v / k[0] - 1.0).abs()).fold(0.0, f64::max);
    let checks = vec![
        CheckReport::at_most("K drift across lambda", k_drift, K_DRIFT_TOL)
            .with_detail(format!("K = {k:?}")),
        CheckReport::at_most("negative duality pairings", negative_pairing as f64, 0.0),
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(EnergyBoundReport {
        lambdas: lambdas.to_vec(),
        samples: m,
        lhs,
        rhs,
        k,
        k_drift,
        checks,
        passed,
        seed,
        fingerprint: cfg.fingerprint(),
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

impl EnergyBoundReport {
    pub fn table(&self) -> Table {
        Table {
            name: "energy_bound".into(),
            header: ["lambda", "lhs_mean", "lhs_std_error", "rhs", "K"].map(String::from).to_vec(),
            rows: (0..self.lambdas.len())
                .map(|i| vec![self.lambdas[i], self.lhs[i].mean, self.lhs[i].std_error, self.rhs[i], self.k[i]])
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests;
