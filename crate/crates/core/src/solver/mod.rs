//! Semi-implicit Euler–Maruyama for the Yosida-regularized system.
//!
//! One step solves, in the mass-weighted sense,
//!
//! ```text
//! Xⁿ⁺¹ + Δt·𝒞_ε Xⁿ⁺¹ + Δt·γ_λ(Xⁿ⁺¹) = Xⁿ − Δt·𝒫(Xⁿ) + ℬ(Xⁿ)ΔWⁿ
//! ```
//!
//! by damped Newton on the coupled unknown. The Jacobian
//! `M + ΔtK + Δt·diag(m·γ_λ′)` is symmetric positive definite, so Newton
//! directions are descent directions for the convex functional whose
//! gradient is the residual.

mod energy;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use sha2::{Digest, Sha256};

pub use energy::{duality_gap, duality_mass, energy_gl, energy_lhs, noise_proxy, stationary_constant, xi_pairing};

use crate::error::{Error, Result};
use crate::geometry::{Grid, GridMode, StatePair};
use crate::noise::{self, Increment, NoiseBasis, NoiseModel, StreamKey, CHECKSUM_SEED};
use crate::operator::BulkSurfaceOperator;
use crate::potentials::{GammaOperator, MonotoneGraph};

/// Named initial data; `y₀` is always the trace of `x₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    Constant(f64),
    /// `a·sin(2πkₓx/Lx)·cos(πk_y y/Ly)` on the strip, `a·cos(πk_y y/Ly)` on
    /// the interval.
    Sin { amplitude: f64, kx: u32, ky: u32 },
    /// Independent uniform values in `[−a, a]`, drawn per trajectory.
    Random { amplitude: f64 },
    State(StatePair),
}

impl InitialProfile {
    pub fn state(&self, grid: &Grid, key: StreamKey) -> Result<StatePair> {
        use std::f64::consts::PI;
        let x = match self {
            InitialProfile::Constant(c) => vec![*c; grid.n_bulk()],
            InitialProfile::Sin { amplitude, kx, ky } => (0..grid.n_bulk())
                .map(|n| {
                    let (x, y) = grid.coords(n);
                    let along = match grid.mode() {
                        GridMode::Strip => (2.0 * PI * *kx as f64 * x / grid.lx()).sin(),
                        GridMode::Interval => 1.0,
                    };
                    amplitude * along * (PI * *ky as f64 * y / grid.ly()).cos()
                })
                .collect(),
            InitialProfile::Random { amplitude } => {
                let mut rng = key.aux_rng(0);
                (0..grid.n_bulk())
                    .map(|_| amplitude * rng.random_range(-1.0..=1.0))
                    .collect()
            }
            InitialProfile::State(s) => {
                s.check_shape(grid)?;
                s.x.clone()
            }
        };
        StatePair::from_bulk(grid, x)
    }
}

impl FromStr for InitialProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("unknown initial profile '{s}' (constant:c, sin:a[,kx[,ky]], random:a)"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<&str> = arg.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            nums[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("bad number '{}' in initial profile", nums[i])))
        };
        let int = |i: usize, default: u32| -> Result<u32> {
            match nums.get(i) {
                None => Ok(default),
                Some(t) => t
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("bad mode index '{t}' in initial profile"))),
            }
        };
        match kind.trim() {
            "constant" if nums.len() == 1 => Ok(InitialProfile::Constant(num(0)?)),
            "sin" if nums.len() <= 3 => Ok(InitialProfile::Sin {
                amplitude: num(0)?,
                kx: int(1, 1)?,
                ky: int(2, 0)?,
            }),
            "random" if nums.len() == 1 => Ok(InitialProfile::Random { amplitude: num(0)? }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialProfile::Constant(c) => write!(f, "constant:{c}"),
            InitialProfile::Sin { amplitude, kx, ky } => write!(f, "sin:{amplitude},{kx},{ky}"),
            InitialProfile::Random { amplitude } => write!(f, "random:{amplitude}"),
            InitialProfile::State(_) => write!(f, "state"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grid: Grid,
    pub eps: f64,
    pub dt: f64,
    pub t_final: f64,
    pub lambda: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub save_every: usize,
    pub gamma: GammaOperator,
    pub noise: NoiseModel,
    pub initial: InitialProfile,
    /// Each step's increment is the sum of this many finer increments, so a
    /// run at `dt` sees the same Brownian path as a run at `dt/substeps`.
    pub substeps: u64,
}

impl SolverConfig {
    /// Desk-scale defaults: 32×17 strip, quartic well, no noise.
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            eps: 0.0,
            dt: 1e-3,
            t_final: 0.25,
            lambda: 0.05,
            newton_tol: 1e-10,
            newton_max: 50,
            save_every: 1,
            gamma: GammaOperator::quartic(),
            noise: NoiseModel::default(),
            initial: InitialProfile::Constant(0.0),
            substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            problems.push(format!("solver.dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            problems.push(format!("solver.T must be >= 0, got {}", self.t_final));
        } else if self.dt > 0.0 {
            let n = (self.t_final / self.dt).round();
            if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
                problems.push(format!(
                    "solver.T = {} is not a whole number of steps of solver.dt = {}",
                    self.t_final, self.dt
                ));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            problems.push(format!("solver.lambda must be > 0, got {}", self.lambda));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            problems.push(format!("solver.eps must be >= 0, got {}", self.eps));
        } else if self.eps > 0.0 && self.grid.mode() == GridMode::Interval {
            problems.push(format!(
                "solver.eps = {} requires grid.mode = strip (interval mode has no surface gradient)",
                self.eps
            ));
        }
        let c_p = self.gamma.c_p();
        if self.dt * c_p >= 1.0 {
            problems.push(format!(
                "solver.dt · C_P = {} must be < 1 (C_P = {c_p} from potentials.pi / potentials.pi_gamma)",
                self.dt * c_p
            ));
        }
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            problems.push(format!("solver.newton_tol must be > 0, got {}", self.newton_tol));
        }
        if self.newton_max == 0 {
            problems.push("solver.newton_max must be >= 1".into());
        }
        if self.save_every == 0 {
            problems.push("solver.save_every must be >= 1".into());
        }
        if self.substeps == 0 {
            problems.push("noise.substeps must be >= 1".into());
        }
        for pair in [&self.gamma.bulk, &self.gamma.boundary] {
            if let Err(e) = pair.beta.validate().and(pair.pi.validate()) {
                problems.push(e.to_string());
            }
        }
        if let Err(e) = self.noise.validate() {
            match e {
                Error::ConfigList(list) => problems.extend(list),
                other => problems.push(other.to_string()),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigList(problems))
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Canonical `key = value` rendering of everything that affects a run.
    pub fn canonical_entries(&self) -> Vec<(String, String)> {
        let g = &self.grid;
        let mode = match g.mode() {
            GridMode::Strip => "strip",
            GridMode::Interval => "interval",
        };
        let mut e: Vec<(String, String)> = vec![
            ("grid.nx".into(), g.nx().to_string()),
            ("grid.ny".into(), g.ny().to_string()),
            ("grid.Lx".into(), g.lx().to_string()),
            ("grid.Ly".into(), g.ly().to_string()),
            ("grid.mode".into(), mode.into()),
            ("potentials.beta".into(), self.gamma.bulk.beta.to_string()),
            ("potentials.pi".into(), self.gamma.bulk.pi.to_string()),
            ("potentials.beta_gamma".into(), self.gamma.boundary.beta.to_string()),
            ("potentials.pi_gamma".into(), self.gamma.boundary.pi.to_string()),
            ("potentials.hypothesis".into(), self.gamma.hypothesis.to_string()),
            ("noise.modes".into(), self.noise.n_modes_bulk.to_string()),
            ("noise.modes_boundary".into(), self.noise.n_modes_boundary.to_string()),
            ("noise.decay".into(), self.noise.decay.to_string()),
            ("noise.kind".into(), self.noise.kind.to_string()),
            ("noise.sigma0".into(), self.noise.sigma0.to_string()),
            ("noise.substeps".into(), self.substeps.to_string()),
        ];
        // δ = 0 spells "no mollifier"
        let (md, mm) = self.noise.mollify.map_or((0.0, 1), |m| (m.delta, m.m));
        e.push(("noise.mollify_delta".into(), md.to_string()));
        e.push(("noise.mollify_m".into(), mm.to_string()));
        e.extend([
            ("solver.dt".into(), self.dt.to_string()),
            ("solver.T".into(), self.t_final.to_string()),
            ("solver.lambda".into(), self.lambda.to_string()),
            ("solver.eps".into(), self.eps.to_string()),
            ("solver.newton_tol".into(), self.newton_tol.to_string()),
            ("solver.newton_max".into(), self.newton_max.to_string()),
            ("solver.save_every".into(), self.save_every.to_string()),
            ("solver.initial".into(), self.initial.to_string()),
        ]);
        e
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.canonical_entries())
    }
}

/// SHA-256 of the canonical `key = value` lines, sorted by key.
pub fn fingerprint(entries: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort();
    let mut h = Sha256::new();
    for (k, v) in sorted {
        h.update(k.as_bytes());
        h.update(b" = ");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Residual history of one Newton solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    pub residuals: Vec<f64>,
}

impl NewtonStats {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.residuals.windows(2).all(|w| w[1] < w[0])
    }
}

/// Solves `M z + Δt K z + Δt g_λ(z) = load(rhs)` for the coupled unknown,
/// where `g_λ` collects `m_D β_λ` on bulk nodes and `m_Γ β_{Γ,λ}` on
/// boundary nodes.
#[allow(clippy::too_many_arguments)]
pub fn implicit_solve(
    op: &BulkSurfaceOperator,
    gamma: &GammaOperator,
    lambda: f64,
    dt: f64,
    rhs: &StatePair,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(StatePair, NewtonStats)> {
    let grid = op.grid();
    let mass = op.mass();
    let b = op.load(rhs)?;
    let target = tol * (1.0 + grid.norm_hcal(rhs));
    let (bulk, bnd) = (&gamma.bulk.beta, &gamma.boundary.beta);

    let eval = |z: &[f64], with_slope: bool| -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let kz = op.stiffness().mul(z);
        let mut f = vec![0.0; z.len()];
        let mut slope = vec![0.0; if with_slope { z.len() } else { 0 }];
        for (i, fi) in f.iter_mut().enumerate() {
            let (v, d) = nonlinear(bulk, z[i], lambda, with_slope)?;
            *fi = mass[i] * z[i] + dt * kz[i] + dt * grid.mass_bulk()[i] * v - b[i];
            if with_slope {
                slope[i] = grid.mass_bulk()[i] * d;
            }
        }
        for (k, &n) in grid.boundary_nodes().iter().enumerate() {
            let (v, d) = nonlinear(bnd, z[n], lambda, with_slope)?;
            f[n] += dt * grid.mass_boundary()[k] * v;
            if with_slope {
                slope[n] += grid.mass_boundary()[k] * d;
            }
        }
        let norm = f.iter().zip(mass).map(|(r, m)| r * r / m).sum::<f64>().sqrt();
        Ok((f, norm, slope))
    };

    let mut z = guess.to_vec();
    let (mut f, mut norm, mut slope) = eval(&z, true)?;
    let mut stats = NewtonStats { residuals: vec![norm] };
    while norm > target {
        if stats.iterations() >= max_iter {
            return Err(Error::StepFailure {
                t: f64::NAN,
                history: stats.residuals,
            });
        }
        let diag: Vec<f64> = mass.iter().zip(&slope).map(|(m, s)| m + dt * s).collect();
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let d = op.solve_shifted(&diag, dt, &neg, None)?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let (tf, tn, _) = eval(&trial, false)?;
            if tn < (1.0 - 1e-4 * alpha) * norm {
                accepted = Some((trial, tf, tn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, _, _)) = accepted else {
            stats.residuals.push(norm);
            return Err(Error::StepFailure {
                t: f64::NAN,
                history: stats.residuals,
            });
        };
        z = trial;
        (f, norm, slope) = eval(&z, true)?;
        stats.residuals.push(norm);
    }
    Ok((StatePair::from_bulk(grid, z)?, stats))
}

fn nonlinear(graph: &MonotoneGraph, r: f64, lambda: f64, with_slope: bool) -> Result<(f64, f64)> {
    if matches!(graph, MonotoneGraph::Zero) {
        return Ok((0.0, 0.0));
    }
    if with_slope {
        graph.yosida_with_slope(r, lambda)
    } else {
        Ok((graph.yosida(r, lambda)?, 0.0))
    }
}

/// Operator, noise basis and configuration bundled for repeated steps.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: SolverConfig,
    op: BulkSurfaceOperator,
    basis: NoiseBasis,
}

/// Result of one step: the new state, its Newton history and the noise
/// increment that drove it.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: StatePair,
    pub newton: NewtonStats,
    pub increment: Increment,
}

impl Stepper {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let op = BulkSurfaceOperator::assemble(&cfg.grid, cfg.eps)?;
        let basis = cfg.noise.basis(&cfg.grid);
        Ok(Self {
            cfg: cfg.clone(),
            op,
            basis,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &BulkSurfaceOperator {
        &self.op
    }

    pub fn basis(&self) -> &NoiseBasis {
        &self.basis
    }

    pub fn increment(&self, key: StreamKey, n: u64) -> Increment {
        let cfg = &self.cfg;
        if cfg.noise.is_silent() {
            return Increment::zeros(&cfg.grid);
        }
        noise::sample_coarse_increment(&self.basis, &cfg.grid, cfg.dt, key, n, cfg.substeps)
    }

    /// Advances `s` from `tₙ = n·Δt` to `tₙ₊₁`.
    pub fn step(&self, s: &StatePair, n: u64, key: StreamKey) -> Result<StepOutcome> {
        let cfg = &self.cfg;
        let grid = &cfg.grid;
        if !s.is_trace_compatible(grid) {
            return Err(Error::Config("step requires a trace-compatible state".into()));
        }
        let (pb, pg) = (&cfg.gamma.bulk.pi, &cfg.gamma.boundary.pi);
        let mut rhs = StatePair {
            x: s.x.iter().map(|&v| v - cfg.dt * pb.value(v)).collect(),
            y: s.y.iter().map(|&v| v - cfg.dt * pg.value(v)).collect(),
        };
        let increment = self.increment(key, n);
        if !cfg.noise.is_silent() {
            let mut kick = noise::apply_diffusion(&cfg.noise, s, &increment);
            if let Some(m) = cfg.noise.mollify {
                kick = self.op.resolvent(m.delta, &kick, m.m)?;
            }
            for (r, k) in rhs.x.iter_mut().zip(&kick.x) {
                *r += k;
            }
            for (r, k) in rhs.y.iter_mut().zip(&kick.y) {
                *r += k;
            }
        }
        let t = n as f64 * cfg.dt;
        let (state, newton) = implicit_solve(
            &self.op,
            &cfg.gamma,
            cfg.lambda,
            cfg.dt,
            &rhs,
            &s.x,
            cfg.newton_tol,
            cfg.newton_max,
        )
        .map_err(|e| match e {
            Error::StepFailure { history, .. } => Error::StepFailure { t, history },
            other => other,
        })?;
        Ok(StepOutcome {
            state,
            newton,
            increment,
        })
    }
}

/// Per-step diagnostics. Index 0 is the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub step: Vec<u64>,
    pub t: Vec<f64>,
    pub norm_h: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub surf_grad_norm: Vec<f64>,
    pub energy_gl: Vec<f64>,
    pub newton_iters: Vec<usize>,
    /// `Σ m (j(J_λx) + j*(β_λ x))` over bulk and boundary.
    pub duality_mass: Vec<f64>,
    /// `⟨ξ, x⟩_H + ⟨ξ_Γ, y⟩_{H_Γ}` with `ξ = β_λ(x)`.
    pub xi_pairing: Vec<f64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.step.len();
        [
            self.t.len(),
            self.norm_h.len(),
            self.grad_norm.len(),
            self.surf_grad_norm.len(),
            self.energy_gl.len(),
            self.newton_iters.len(),
            self.duality_mass.len(),
            self.xi_pairing.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }
}

/// A stored state with its selections `ξ = β_λ(x)`, `ξ_Γ = β_{Γ,λ}(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedState {
    pub step: u64,
    pub t: f64,
    pub state: StatePair,
    pub xi: StatePair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub trajectory: u64,
    pub fingerprint: String,
    pub series: Series,
    pub saved: Vec<SavedState>,
    /// Largest aggregate Fenchel gap over saved steps.
    pub duality_gap_max: f64,
    /// Newton residual histories were strictly decreasing in every step.
    pub newton_monotone: bool,
    /// Checksum of every noise increment, in order.
    pub noise_checksum: u64,
    pub failure: Option<String>,
}

impl RunResult {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_state(&self) -> Option<&StatePair> {
        self.saved.last().map(|s| &s.state)
    }

    pub fn times(&self) -> &[f64] {
        &self.series.t
    }
}

fn selection(cfg: &SolverConfig, s: &StatePair) -> Result<StatePair> {
    let (b, g) = (&cfg.gamma.bulk.beta, &cfg.gamma.boundary.beta);
    Ok(StatePair {
        x: s.x.iter().map(|&v| b.yosida(v, cfg.lambda)).collect::<Result<_>>()?,
        y: s.y.iter().map(|&v| g.yosida(v, cfg.lambda)).collect::<Result<_>>()?,
    })
}

fn record(cfg: &SolverConfig, op: &BulkSurfaceOperator, series: &mut Series, n: u64, s: &StatePair, iters: usize) -> Result<()> {
    let g = &cfg.grid;
    series.step.push(n);
    series.t.push(n as f64 * cfg.dt);
    series.norm_h.push(g.norm_hcal(s));
    series.grad_norm.push(g.grad_sq_bulk(&s.x).sqrt());
    series.surf_grad_norm.push(g.grad_sq_boundary(&s.y).sqrt());
    series.energy_gl.push(energy_gl(cfg, op, s)?);
    series.newton_iters.push(iters);
    series.duality_mass.push(duality_mass(cfg, s)?);
    series.xi_pairing.push(xi_pairing(cfg, s)?);
    Ok(())
}

/// One sample path from `t = 0` to `T`, keyed by `(seed, trajectory)`.
pub fn run_trajectory(cfg: &SolverConfig, seed: u64) -> Result<RunResult> {
    run_path(cfg, StreamKey::new(seed, 0))
}

/// As [`run_trajectory`] with an explicit stream key. Step failures end the
/// run early; the partial result is returned with `failure` set.
pub fn run_path(cfg: &SolverConfig, key: StreamKey) -> Result<RunResult> {
    let stepper = Stepper::new(cfg)?;
    let x0 = cfg.initial.state(&cfg.grid, key)?;
    run_from(&stepper, key, x0)
}

/// Runs from an explicit initial state.
pub fn run_from(stepper: &Stepper, key: StreamKey, x0: StatePair) -> Result<RunResult> {
    let cfg = stepper.config();
    let op = stepper.operator();
    if !x0.is_trace_compatible(&cfg.grid) {
        return Err(Error::Config("initial state must be trace compatible".into()));
    }
    let mut series = Series::default();
    let mut saved = Vec::new();
    record(cfg, op, &mut series, 0, &x0, 0)?;
    let mut gap_max = duality_gap(cfg, &x0)?;
    saved.push(SavedState {
        step: 0,
        t: 0.0,
        xi: selection(cfg, &x0)?,
        state: x0.clone(),
    });
    let mut checksum = CHECKSUM_SEED;
    let mut monotone = true;
    let mut failure = None;
    let mut s = x0;
    let steps = cfg.n_steps() as u64;
    for n in 0..steps {
        let out = match stepper.step(&s, n, key) {
            Ok(out) => out,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        checksum = out.increment.checksum(checksum);
        monotone &= out.newton.strictly_decreasing();
        s = out.state;
        let k = n + 1;
        record(cfg, op, &mut series, k, &s, out.newton.iterations())?;
        if k % cfg.save_every as u64 == 0 || k == steps {
            gap_max = gap_max.max(duality_gap(cfg, &s)?);
            saved.push(SavedState {
                step: k,
                t: k as f64 * cfg.dt,
                xi: selection(cfg, &s)?,
                state: s.clone(),
            });
        }
    }
    Ok(RunResult {
        seed: key.seed,
        trajectory: key.trajectory,
        fingerprint: cfg.fingerprint(),
        series,
        saved,
        duality_gap_max: gap_max,
        newton_monotone: monotone,
        noise_checksum: checksum,
        failure,
    })
}
