//! Parameter sweeps with a frozen noise path.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;

use super::{l2_distance, l2_v_distance_sq, linf_distance, run_batch, SweepReport, Table};
use crate::error::{Error, Result};
use crate::geometry::{Grid, GridMode, StatePair};
use crate::noise::StreamKey;
use crate::operator::verify::CheckReport;
use crate::potentials::MonotoneGraph;
use crate::solver::{InitialProfile, RunResult, SolverConfig};

/// Distances below this are treated as exact agreement.
const NEGLIGIBLE: f64 = 1e-13;

fn dense(cfg: &SolverConfig) -> SolverConfig {
    let mut c = cfg.clone();
    c.save_every = 1;
    c
}

fn frozen_path_check(runs: &[RunResult]) -> CheckReport {
    let first = runs[0].noise_checksum;
    let differing = runs.iter().filter(|r| r.noise_checksum != first).count();
    CheckReport::at_most("frozen noise path", differing as f64, 0.0)
}

fn strictly_decreasing(name: &str, d: &[f64]) -> CheckReport {
    let offending = d.windows(2).position(|w| !(w[1] < w[0]));
    let mut c = CheckReport::new(name, offending.map_or(0.0, |i| i as f64), 0.0, offending.is_none());
    if let Some(i) = offending {
        c = c.with_detail(format!("d[{}] = {:e} >= d[{i}] = {:e}", i + 1, d[i + 1], d[i]));
    }
    c
}

fn all_negligible(d: &[f64]) -> bool {
    d.iter().all(|&v| v <= NEGLIGIBLE)
}

/// Frozen-noise distances `dⱼ = ‖X_{λⱼ} − X_{λⱼ₊₁}‖_{L²(0,T;ℋ)}` along a
/// halving sequence of Yosida parameters.
///
/// For the zero graph λ has no effect and every distance must vanish. When
/// both graphs are linear, `β_λ = a/(1+λa)` and the distances must halve
/// with λ to within 10%. The first pair is recomputed at half the time step
/// on the same Brownian path and must agree within 25%; to make that
/// possible the main runs draw each increment as two half-step increments.
pub fn lambda_sweep(cfg: &SolverConfig, lambdas: &[f64], seed: u64) -> Result<SweepReport> {
    let started = Instant::now();
    if lambdas.len() < 3 {
        return Err(Error::Config("lambda sweep needs at least 3 values".into()));
    }
    if let Some(w) = lambdas.windows(2).find(|w| (w[1] / w[0] - 0.5).abs() > 1e-9) {
        return Err(Error::Config(format!("lambda values must halve: {} -> {}", w[0], w[1])));
    }
    let base = dense(cfg);
    let key = StreamKey::new(seed, 0);
    let mut jobs: Vec<(SolverConfig, StreamKey)> = lambdas
        .iter()
        .map(|&l| {
            let mut c = base.clone();
            c.lambda = l;
            (c, key)
        })
        .collect();
    // the first pair again at Δt/2, on the same Brownian path
    for &l in &lambdas[..2] {
        let mut c = base.clone();
        c.lambda = l;
        c.dt = base.dt / 2.0;
        jobs.push((c, key));
    }
    for job in jobs.iter_mut().take(lambdas.len()) {
        job.0.substeps = base.substeps * 2;
    }
    let runs = run_batch(&jobs)?;
    let (main, half) = runs.split_at(lambdas.len());
    let g = &base.grid;
    let d = main
        .windows(2)
        .map(|w| l2_distance(g, base.dt, &w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let d_half = l2_distance(g, base.dt / 2.0, &half[0], &half[1])?;

    let mut report = SweepReport::new("lambda-sweep", "lambda", lambdas, &base, seed);
    report.noise_checksums = main.iter().map(|r| r.noise_checksum).collect();
    report.checks.push(frozen_path_check(main));
    let graphs = [&base.gamma.bulk.beta, &base.gamma.boundary.beta];
    if graphs.iter().all(|b| matches!(b, MonotoneGraph::Zero)) {
        let worst = d.iter().copied().fold(0.0, f64::max);
        report.checks.push(CheckReport::at_most("zero graph has no lambda effect", worst, NEGLIGIBLE));
    } else {
        report.checks.push(strictly_decreasing("distances strictly decreasing", &d));
        let shrink = d[d.len() - 1] / d[0];
        report.checks.push(CheckReport::new("d_last < d_first/4", shrink, 0.25, shrink < 0.25));
        let rel = (d_half / d[0] - 1.0).abs();
        report.checks.push(
            CheckReport::at_most("half time step cross-check", rel, 0.25)
                .with_detail(format!("d0 = {:e} at dt, {:e} at dt/2", d[0], d_half)),
        );
        if graphs.iter().all(|b| matches!(b, MonotoneGraph::Linear { .. })) {
            let ratios: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
            let worst = ratios.iter().map(|r| (r / 2.0 - 1.0).abs()).fold(0.0, f64::max);
            report.checks.push(
                CheckReport::at_most("linear graph converges linearly", worst, 0.1)
                    .with_detail(format!("successive ratios {ratios:?}")),
            );
            report.auxiliary.insert("ratios".into(), ratios);
        }
    }
    report.auxiliary.insert("d_half_dt".into(), vec![d_half]);
    report
        .auxiliary
        .insert("final_norm_H".into(), main.iter().map(|r| *r.series.norm_h.last().unwrap()).collect());
    report.tables.push(Table {
        name: "lambda_sweep".into(),
        header: ["lambda", "lambda_next", "distance"].map(String::from).to_vec(),
        rows: d.iter().enumerate().map(|(j, &v)| vec![lambdas[j], lambdas[j + 1], v]).collect(),
    });
    report.distances = d;
    Ok(report.finish(started))
}

/// Smooth test fields for the weak-convergence probes.
fn probes(grid: &Grid) -> Vec<StatePair> {
    let field = |f: &dyn Fn(f64, f64) -> f64| {
        StatePair::from_bulk(grid, (0..grid.n_bulk()).map(|n| {
            let (x, y) = grid.coords(n);
            f(x, y)
        }).collect())
        .expect("probe field has the grid's shape")
    };
    let (lx, ly) = (grid.lx(), grid.ly());
    vec![
        field(&|_, _| 1.0),
        field(&|x, y| (2.0 * PI * x / lx).cos() * (PI * y / ly).cos()),
        field(&|x, _| (2.0 * PI * x / lx).sin()),
    ]
}

/// Vanishing surface viscosity at fixed λ.
///
/// Reports `eⱼ = ‖X_εⱼ − X₀‖_{L²(0,T;ℋ)}`, the viscous term
/// `qⱼ = εⱼ‖y‖²_{L²(0,T;H¹(Γ))}` with its log-log slope in ε, the a priori
/// quantity `bⱼ = √εⱼ‖∇_Γy‖_{L²(0,T;H_Γ)}` and bounded-functional probes of
/// the state and of the selection at `T`.
pub fn eps_sweep(cfg: &SolverConfig, epsilons: &[f64], seed: u64) -> Result<SweepReport> {
    let started = Instant::now();
    if epsilons.len() < 3 || *epsilons.last().unwrap() != 0.0 {
        return Err(Error::Config("eps sweep needs at least 3 values ending in 0".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("eps values must be strictly decreasing".into()));
    }
    if cfg.grid.mode() == GridMode::Interval {
        return Err(Error::Config("eps sweep requires grid.mode = strip".into()));
    }
    let base = dense(cfg);
    let key = StreamKey::new(seed, 0);
    let jobs: Vec<(SolverConfig, StreamKey)> = epsilons
        .iter()
        .map(|&e| {
            let mut c = base.clone();
            c.eps = e;
            (c, key)
        })
        .collect();
    let runs = run_batch(&jobs)?;
    let g = &base.grid;
    let dt = base.dt;
    let reference = runs.last().unwrap();
    let positive = &runs[..runs.len() - 1];
    let eps_pos = &epsilons[..epsilons.len() - 1];

    let e = positive
        .iter()
        .map(|r| l2_distance(g, dt, r, reference))
        .collect::<Result<Vec<_>>>()?;
    let mut q = Vec::new();
    let mut b = Vec::new();
    for (r, &eps) in positive.iter().zip(eps_pos) {
        let grad: f64 = (1..r.series.len()).map(|n| dt * r.series.surf_grad_norm[n].powi(2)).sum();
        let l2: f64 = r.saved.iter().skip(1).map(|s| dt * g.norm_boundary(&s.state.y).powi(2)).sum();
        q.push(eps * (l2 + grad));
        b.push((eps * grad).sqrt());
    }
    let fields = probes(g);
    let probe_gap = |pick: &dyn Fn(&RunResult) -> &StatePair| -> Vec<f64> {
        let r0 = pick(reference);
        positive
            .iter()
            .map(|r| {
                let d = pick(r).sub(r0);
                fields.iter().map(|f| g.inner_hcal(&d, f).abs()).fold(0.0, f64::max)
            })
            .collect()
    };
    let state_probe = probe_gap(&|r| &r.saved.last().unwrap().state);
    let selection_probe = probe_gap(&|r| &r.saved.last().unwrap().xi);

    let mut report = SweepReport::new("eps-sweep", "eps", epsilons, &base, seed);
    report.noise_checksums = runs.iter().map(|r| r.noise_checksum).collect();
    report.checks.push(frozen_path_check(&runs));
    if all_negligible(&e) {
        report.checks.push(CheckReport::at_most("eps has no effect", e.iter().copied().fold(0.0, f64::max), NEGLIGIBLE));
    } else {
        report.checks.push(strictly_decreasing("distance to eps=0 decreasing", &e));
        let shrink = e[e.len() - 1] / e[0];
        report.checks.push(CheckReport::new("distance below 10% of first", shrink, 0.1, shrink < 0.1));
        report.checks.push(strictly_decreasing("viscous term decreasing", &q));
        let slope = loglog_slope(eps_pos, &q);
        report.checks.push(
            CheckReport::new("viscous term at least linear in eps", slope, VISCOUS_SLOPE_MIN, slope >= VISCOUS_SLOPE_MIN)
                .with_detail(format!("fitted log-log slope of eps*|y|^2_H1 = {slope:.4}")),
        );
        let spread = b.iter().copied().fold(0.0, f64::max) / b.iter().copied().fold(f64::INFINITY, f64::min);
        report.checks.push(CheckReport::at_most("sqrt(eps)|grad_G y| bounded (max/min)", spread, 3.0));
    }
    report.auxiliary.insert("viscous_term".into(), q.clone());
    report.auxiliary.insert("sqrt_eps_surface_gradient".into(), b.clone());
    report.auxiliary.insert("probe_state".into(), state_probe.clone());
    report.auxiliary.insert("probe_selection".into(), selection_probe.clone());
    report.tables.push(Table {
        name: "eps_sweep".into(),
        header: ["eps", "distance", "viscous_term", "sqrt_eps_surface_gradient", "probe_state", "probe_selection"]
            .map(String::from)
            .to_vec(),
        rows: (0..e.len())
            .map(|j| vec![eps_pos[j], e[j], q[j], b[j], state_probe[j], selection_probe[j]])
            .collect(),
    });
    report.distances = e;
    Ok(report.finish(started))
}

/// Least slope accepted for `ln q` against `ln ε`.
pub const VISCOUS_SLOPE_MIN: f64 = 1.0;

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Trace-compatible direction of unit `ℋ` norm, drawn per trajectory.
pub fn perturbation_direction(grid: &Grid, key: StreamKey) -> StatePair {
    let mut rng = key.aux_rng(1);
    let x: Vec<f64> = (0..grid.n_bulk()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let p = StatePair::from_bulk(grid, x).expect("direction has the grid's shape");
    let n = grid.norm_hcal(&p);
    p.scaled(1.0 / n)
}

/// Paired runs from `x₀` and `x₀ + δ₀p` on the same noise path.
///
/// `R(δ₀) = (E‖X−X′‖²_{L∞(0,T;ℋ)} + E‖X−X′‖²_{L²(0,T;𝒱_ε)})^{1/2} / δ₀`,
/// with `‖δ₀p‖_{L²(Ω;ℋ)} = δ₀` since `p` has unit norm on every path. The
/// constant must be uniform: `max R / min R ≤ 2`.
pub fn continuous_dependence(cfg: &SolverConfig, deltas0: &[f64], m: usize, seed: u64) -> Result<SweepReport> {
    let started = Instant::now();
    let positive: Vec<f64> = deltas0.iter().copied().filter(|&d| d > 0.0).collect();
    if m == 0 || deltas0.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Config("continuous dependence needs samples >= 1 and perturbations >= 0".into()));
    }
    let span = positive.iter().copied().fold(0.0, f64::max) / positive.iter().copied().fold(f64::INFINITY, f64::min);
    if positive.len() < 2 || span < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Config("perturbation sizes must span at least two decades".into()));
    }
    let base = dense(cfg);
    let g = &base.grid;
    let mut jobs = Vec::new();
    for t in 0..m as u64 {
        let key = StreamKey::new(seed, t);
        let x0 = base.initial.state(g, key)?;
        let p = perturbation_direction(g, key);
        for &d in std::iter::once(&0.0).chain(deltas0) {
            let mut c = base.clone();
            let mut x = x0.x.clone();
            for (v, w) in x.iter_mut().zip(&p.x) {
                *v += d * w;
            }
            c.initial = InitialProfile::State(StatePair::from_bulk(g, x)?);
            jobs.push((c, key));
        }
    }
    let runs = run_batch(&jobs)?;
    let per = deltas0.len() + 1;
    let mut numer = vec![0.0; deltas0.len()];
    for chunk in runs.chunks(per) {
        for (i, r) in chunk[1..].iter().enumerate() {
            let sup = linf_distance(g, &chunk[0], r)?;
            let v = l2_v_distance_sq(g, base.dt, base.eps, &chunk[0], r)?;
            numer[i] += (sup * sup + v) / m as f64;
        }
    }
    let numer: Vec<f64> = numer.iter().map(|v| v.sqrt()).collect();
    let ratios: Vec<f64> = deltas0
        .iter()
        .zip(&numer)
        .filter(|(d, _)| **d > 0.0)
        .map(|(d, n)| n / d)
        .collect();
    let mut report = SweepReport::new("continuous-dependence", "delta0", deltas0, &base, seed);
    report.noise_checksums = runs.iter().step_by(per).map(|r| r.noise_checksum).collect();
    let paired = runs
        .chunks(per)
        .all(|c| c.iter().all(|r| r.noise_checksum == c[0].noise_checksum));
    report.checks.push(CheckReport::at_most("paired runs share noise", if paired { 0.0 } else { 1.0 }, 0.0));
    let zero_gap = deltas0
        .iter()
        .zip(&numer)
        .filter(|(d, _)| **d == 0.0)
        .map(|(_, n)| *n)
        .fold(0.0, f64::max);
    report.checks.push(CheckReport::at_most("zero perturbation gives zero distance", zero_gap, 0.0));
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    report.checks.push(
        CheckReport::at_most("Lipschitz ratio uniform (max/min)", hi / lo, 2.0)
            .with_detail(format!("R = {ratios:?}")),
    );
    report.auxiliary.insert("lipschitz_ratio".into(), ratios.clone());
    report.tables.push(Table {
        name: "continuous_dependence".into(),
        header: ["delta0", "distance", "ratio"].map(String::from).to_vec(),
        rows: deltas0
            .iter()
            .zip(&numer)
            .map(|(&d, &n)| vec![d, n, if d > 0.0 { n / d } else { 0.0 }])
            .collect(),
    });
    report.distances = numer;
    Ok(report.finish(started))
}
