//! Numerical checks of the structural properties of `(I + δ𝒞_ε)⁻¹`:
//! contraction in `ℋ` and `L¹`, the maximum principle, `L¹ → L∞` smoothing
//! of resolvent powers, `δ → 0` asymptotics, and the Jensen inequality for
//! convex potentials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::BulkSurfaceOperator;
use crate::error::Result;
use crate::geometry::{Grid, StatePair};
use crate::potentials::PotentialPair;

/// Slack on contraction ratios and pointwise bounds.
pub const PROPERTY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offending_seed: Option<u64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed,
            offending_seed: None,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, value <= tolerance)
    }
}

pub(crate) fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn gaussian_pair(grid: &Grid, rng: &mut impl Rng) -> StatePair {
    StatePair {
        x: (0..grid.n_bulk()).map(|_| rng.sample(StandardNormal)).collect(),
        y: (0..grid.n_boundary()).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// `ℋ` and `L¹` norm ratios of the resolvent on one right-hand side; `0/0`
/// counts as 1.
pub fn contraction_ratios(op: &BulkSurfaceOperator, delta: f64, rhs: &StatePair) -> Result<(f64, f64)> {
    let g = op.grid();
    let out = op.resolvent(delta, rhs, 1)?;
    Ok((
        ratio(g.norm_hcal(&out), g.norm_hcal(rhs)),
        ratio(g.norm_l1(&out), g.norm_l1(rhs)),
    ))
}

/// Contraction of `(I + δ𝒞_ε)⁻¹` in `ℋ` and in mass-weighted `L¹` over
/// `trials` Gaussian right-hand sides.
pub fn verify_contraction(op: &BulkSurfaceOperator, delta: f64, trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let tol = 1.0 + PROPERTY_SLACK;
    let (mut worst_h, mut worst_l1) = (0.0_f64, 0.0_f64);
    let mut offending = None;
    for t in 0..trials as u64 {
        let rhs = gaussian_pair(op.grid(), &mut trial_rng(seed, t));
        let (h, l1) = contraction_ratios(op, delta, &rhs)?;
        if (h > tol || l1 > tol) && offending.is_none() {
            offending = Some(t);
        }
        worst_h = worst_h.max(h);
        worst_l1 = worst_l1.max(l1);
    }
    let label = format!("delta={delta},eps={}", op.eps());
    let mut h = CheckReport::at_most(format!("contraction_H[{label}]"), worst_h, tol);
    let mut l1 = CheckReport::at_most(format!("contraction_L1[{label}]"), worst_l1, tol);
    if let Some(t) = offending {
        let detail = format!("first violation at seed {seed}, trial {t}");
        h = h.with_detail(detail.clone());
        l1 = l1.with_detail(detail);
        h.offending_seed = Some(t);
        l1.offending_seed = Some(t);
    }
    Ok(vec![h, l1])
}

/// Largest excess of the resolvent output over `max(c1, c2)` and the node
/// where it occurs (bulk index, or `n_bulk + k` for boundary node `k`).
pub fn max_principle_excess(op: &BulkSurfaceOperator, delta: f64, rhs: &StatePair, c1: f64, c2: f64) -> Result<(f64, usize)> {
    let out = op.resolvent(delta, rhs, 1)?;
    let bound = c1.max(c2);
    Ok(out
        .x
        .iter()
        .chain(&out.y)
        .enumerate()
        .map(|(n, v)| (v - bound, n))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a }))
}

/// Maximum principle: `f ≤ c1` and `g ≤ c2` force `u, v ≤ max(c1, c2)`.
/// Random data take values in `[c − 3.5, c]` with a quarter of the nodes
/// sitting exactly at the bound.
pub fn verify_max_principle(
    op: &BulkSurfaceOperator,
    delta: f64,
    c1: f64,
    c2: f64,
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    let g = op.grid();
    let mut worst = f64::NEG_INFINITY;
    let mut offending = None;
    for t in 0..trials as u64 {
        let mut rng = trial_rng(seed, t);
        let mut draw = |c: f64| {
            if rng.random_bool(0.25) {
                c
            } else {
                c - rng.random_range(0.0..3.5)
            }
        };
        let rhs = StatePair {
            x: (0..g.n_bulk()).map(|_| draw(c1)).collect(),
            y: (0..g.n_boundary()).map(|_| draw(c2)).collect(),
        };
        let (excess, node) = max_principle_excess(op, delta, &rhs, c1, c2)?;
        if excess > PROPERTY_SLACK && offending.is_none() {
            offending = Some((t, node));
        }
        worst = worst.max(excess);
    }
    let mut report = CheckReport::at_most(
        format!("max_principle[delta={delta},c1={c1},c2={c2}]"),
        worst,
        PROPERTY_SLACK,
    );
    if let Some((t, node)) = offending {
        report.offending_seed = Some(t);
        report.detail = format!("trial {t}: bound exceeded at node {node}");
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingReport {
    pub delta: f64,
    pub m: usize,
    /// `‖R^m spike‖_∞` for unit-mass spikes, labelled by position.
    pub spikes: Vec<(String, f64)>,
    /// Max over min of the spike responses.
    pub spread: f64,
    /// Largest `‖R^m f‖_∞ / ‖f‖_{L¹}` over random trial data.
    pub random_ratio: f64,
    pub passed: bool,
}

/// Unit-L¹ spike at bulk node `n`.
pub fn bulk_spike(grid: &Grid, n: usize) -> StatePair {
    let mut s = StatePair::zeros(grid);
    s.x[n] = 1.0 / grid.mass_bulk()[n];
    s
}

/// Unit-L¹ spike at boundary node `k`.
pub fn boundary_spike(grid: &Grid, k: usize) -> StatePair {
    let mut s = StatePair::zeros(grid);
    s.y[k] = 1.0 / grid.mass_boundary()[k];
    s
}

/// Sup norm of `(I + δ𝒞_ε)⁻ᵐ` applied to a unit-mass spike.
pub fn spike_response(op: &BulkSurfaceOperator, delta: f64, m: usize, spike: &StatePair) -> Result<f64> {
    Ok(Grid::norm_linf(&op.resolvent_power(delta, spike, m)?))
}

/// `L¹ → L∞` smoothing of the resolvent power. Spikes are placed along the
/// middle row and along a boundary circle; the responses within each family
/// must agree to 5%, and the overall ratio is reported against random data.
pub fn verify_smoothing(op: &BulkSurfaceOperator, delta: f64, m: usize, trials: usize, seed: u64) -> Result<SmoothingReport> {
    let g = op.grid();
    let mid = g.ny() / 2;
    let columns: Vec<usize> = [0, g.nx() / 3, g.nx() / 2, g.nx() - 1].into_iter().collect();
    let mut spikes = Vec::new();
    let mut bulk = Vec::new();
    for &i in &columns {
        let v = spike_response(op, delta, m, &bulk_spike(g, g.bulk_index(i, mid)))?;
        spikes.push((format!("bulk({i},{mid})"), v));
        bulk.push(v);
    }
    let mut bnd = Vec::new();
    for &i in &columns {
        for k in [i, g.nx() + i] {
            let v = spike_response(op, delta, m, &boundary_spike(g, k))?;
            spikes.push((format!("boundary({k})"), v));
            bnd.push(v);
        }
    }
    let spread_of = |v: &[f64]| {
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let spread = spread_of(&bulk).max(spread_of(&bnd));
    let mut random_ratio = spikes.iter().map(|s| s.1).fold(0.0, f64::max);
    for t in 0..trials as u64 {
        let rhs = gaussian_pair(g, &mut trial_rng(seed, t));
        let out = op.resolvent_power(delta, &rhs, m)?;
        random_ratio = random_ratio.max(Grid::norm_linf(&out) / g.norm_l1(&rhs));
    }
    Ok(SmoothingReport {
        delta,
        m,
        spikes,
        spread,
        random_ratio,
        passed: spread <= 1.05 && random_ratio.is_finite(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub deltas: Vec<f64>,
    pub errors: Vec<f64>,
    /// `errors[k+1] / errors[k]`.
    pub ratios: Vec<f64>,
    pub decreasing: bool,
    /// Whether every ratio lies in `[0.4, 0.6]` (only meaningful for smooth data).
    pub first_order: bool,
}

/// `‖(I + δ𝒞_ε)⁻¹ rhs − rhs‖_ℋ` along a decreasing list of δ.
pub fn verify_delta_asymptotics(op: &BulkSurfaceOperator, rhs: &StatePair, deltas: &[f64]) -> Result<AsymptoticsReport> {
    let g = op.grid();
    let mut errors = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let out = op.resolvent(d, rhs, 1)?;
        errors.push(g.norm_hcal(&out.sub(rhs)));
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| ratio(w[1], w[0])).collect();
    let all_zero = errors.iter().all(|&e| e <= 1e-12 * (1.0 + g.norm_hcal(rhs)));
    let decreasing = all_zero || errors.windows(2).all(|w| w[1] < w[0]);
    let first_order = !all_zero && ratios.iter().all(|r| (0.4..=0.6).contains(r));
    Ok(AsymptoticsReport {
        deltas: deltas.to_vec(),
        errors,
        ratios,
        decreasing,
        first_order,
    })
}

/// Jensen's inequality `Φ(J f) ≤ J Φ(f)` for `Φ = j`, separately for the
/// bulk component of `J(f, 0)` and the boundary component of `J(0, g)`.
pub fn verify_jensen(op: &BulkSurfaceOperator, delta: f64, pot: &PotentialPair, trials: usize, seed: u64) -> Result<CheckReport> {
    let g = op.grid();
    let phi = |v: f64| pot.j(v);
    let mut worst = f64::NEG_INFINITY;
    let mut offending = None;
    for t in 0..trials as u64 {
        let mut rng = trial_rng(seed, t);
        let data = gaussian_pair(g, &mut rng);
        let bulk_in = StatePair {
            x: data.x.clone(),
            y: vec![0.0; g.n_boundary()],
        };
        let bnd_in = StatePair {
            x: vec![0.0; g.n_bulk()],
            y: data.y.clone(),
        };
        let lhs_b = op.resolvent(delta, &bulk_in, 1)?;
        let rhs_b = op.resolvent(
            delta,
            &StatePair {
                x: data.x.iter().map(|&v| phi(v)).collect(),
                y: vec![0.0; g.n_boundary()],
            },
            1,
        )?;
        let lhs_g = op.resolvent(delta, &bnd_in, 1)?;
        let rhs_g = op.resolvent(
            delta,
            &StatePair {
                x: vec![0.0; g.n_bulk()],
                y: data.y.iter().map(|&v| phi(v)).collect(),
            },
            1,
        )?;
        let excess_b = lhs_b
            .x
            .iter()
            .zip(&rhs_b.x)
            .map(|(u, r)| (phi(*u) - r) / (1.0 + r.abs()))
            .fold(f64::NEG_INFINITY, f64::max);
        let excess_g = lhs_g
            .y
            .iter()
            .zip(&rhs_g.y)
            .map(|(u, r)| (phi(*u) - r) / (1.0 + r.abs()))
            .fold(f64::NEG_INFINITY, f64::max);
        let e = excess_b.max(excess_g);
        if e > 1e-9 && offending.is_none() {
            offending = Some(t);
        }
        worst = worst.max(e);
    }
    let mut report = CheckReport::at_most(format!("jensen[delta={delta},eps={},beta={}]", op.eps(), pot.beta), worst, 1e-9);
    report.offending_seed = offending;
    Ok(report)
}

/// Discrete trace constant `sup ‖τu‖_{H_Γ} / ‖u‖_{H¹}`, by power iteration
/// on `(M_D + K_D)⁻¹ τᵀ M_Γ τ`.
pub fn trace_constant(grid: &Grid, iterations: usize) -> Result<f64> {
    let op = BulkSurfaceOperator::assemble(grid, 0.0)?;
    let mb = grid.mass_bulk();
    let mut u = vec![1.0; grid.n_bulk()];
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let mut b = vec![0.0; grid.n_bulk()];
        for (k, &n) in grid.boundary_nodes().iter().enumerate() {
            b[n] = grid.mass_boundary()[k] * u[n];
        }
        let w = op.solve_shifted(mb, 1.0, &b, None)?;
        let h1 = |v: &[f64]| grid.norm_bulk(v).powi(2) + grid.grad_sq_bulk(v);
        let norm = h1(&w).sqrt();
        u = w.iter().map(|v| v / norm).collect();
        let tr = grid.norm_boundary(&grid.trace(&u)?);
        lambda = tr / h1(&u).sqrt();
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{MonotoneGraph, Perturbation, Side};

    fn op(nx: usize, ny: usize, eps: f64) -> BulkSurfaceOperator {
        BulkSurfaceOperator::assemble(&Grid::strip(nx, ny, 1.0, 1.0).unwrap(), eps).unwrap()
    }

    #[test]
    fn contraction_conventions() {
        let o = op(8, 5, 0.1);
        let g = o.grid().clone();
        assert_eq!(contraction_ratios(&o, 0.5, &StatePair::zeros(&g)).unwrap(), (1.0, 1.0));
        let (h, l1) = contraction_ratios(&o, 0.5, &StatePair::constant(&g, 2.0)).unwrap();
        assert!((h - 1.0).abs() < 1e-12 && (l1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_on_random_data() {
        let o = op(16, 9, 0.1);
        for delta in [0.01, 0.1, 1.0] {
            let reports = verify_contraction(&o, delta, 40, 5).unwrap();
            assert!(reports.iter().all(|r| r.passed), "{reports:?}");
            assert!(reports[0].value < 1.0);
        }
    }

    #[test]
    fn max_principle_examples() {
        let o = op(16, 9, 0.0);
        let g = o.grid().clone();
        let ones = StatePair::constant(&g, 1.0);
        let out = o.resolvent(0.3, &ones, 1).unwrap();
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let mut mixed = ones.clone();
        mixed.y.iter_mut().for_each(|v| *v = 2.0);
        let (excess, _) = max_principle_excess(&o, 0.3, &mixed, 1.0, 2.0).unwrap();
        assert!(excess <= PROPERTY_SLACK);
        assert!(verify_max_principle(&o, 0.1, 0.5, 0.5, 30, 1).unwrap().passed);
        assert!(verify_max_principle(&o, 1.0, -1.0, 2.0, 30, 2).unwrap().passed);
    }

    #[test]
    fn max_principle_spot_check_against_dense_solve() {
        // f uniform in [−3, 0.5], g ≡ 0.5 on a 16×9 grid; the dense oracle is
        // Gaussian elimination on the assembled (M + δK).
        let o = op(16, 9, 0.2);
        let g = o.grid().clone();
        let mut rng = trial_rng(17, 0);
        let rhs = StatePair {
            x: (0..g.n_bulk()).map(|_| rng.random_range(-3.0..0.5)).collect(),
            y: vec![0.5; g.n_boundary()],
        };
        let n = g.n_bulk();
        let delta = 0.1;
        let mut a = vec![vec![0.0; n + 1]; n];
        for (i, row) in a.iter_mut().enumerate() {
            for j in 0..n {
                row[j] = delta * o.stiffness().get(i, j);
            }
            row[i] += o.mass()[i];
        }
        let b = o.load(&rhs).unwrap();
        for i in 0..n {
            a[i][n] = b[i];
        }
        for c in 0..n {
            let piv = (c..n).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs())).unwrap();
            a.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        let mut dense = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * dense[k]).sum();
            dense[i] = (a[i][n] - s) / a[i][i];
        }
        let out = o.resolvent(delta, &rhs, 1).unwrap();
        for (u, v) in out.x.iter().zip(&dense) {
            assert!((u - v).abs() < 1e-11);
            assert!(*u <= 0.5 + PROPERTY_SLACK);
        }
    }

    #[test]
    fn smoothing_of_zero_and_translation_invariance() {
        let o = op(16, 9, 0.0);
        let g = o.grid().clone();
        assert_eq!(Grid::norm_linf(&o.resolvent(0.1, &StatePair::zeros(&g), 2).unwrap()), 0.0);
        let a = spike_response(&o, 0.1, 2, &bulk_spike(&g, g.bulk_index(0, 4))).unwrap();
        let b = spike_response(&o, 0.1, 2, &bulk_spike(&g, g.bulk_index(9, 4))).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        let report = verify_smoothing(&o, 0.1, 2, 5, 0).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn delta_asymptotics_constant_and_rough() {
        let o = op(16, 9, 0.0);
        let g = o.grid().clone();
        let deltas = [0.4, 0.2, 0.1, 0.05];
        let c = verify_delta_asymptotics(&o, &StatePair::constant(&g, 3.0), &deltas).unwrap();
        assert!(c.errors.iter().all(|&e| e < 1e-12));
        let rough = gaussian_pair(&g, &mut trial_rng(9, 0));
        let r = verify_delta_asymptotics(&o, &rough, &deltas).unwrap();
        assert!(r.decreasing, "{r:?}");
    }

    #[test]
    fn jensen_examples() {
        let o = op(8, 5, 0.1);
        let g = o.grid().clone();
        let quad = PotentialPair::new(MonotoneGraph::Linear { a: 1.0 }, Perturbation::Zero, Side::Bulk).unwrap();
        // constant data: J(c, c) = c, so both sides are j(c) on the bulk
        let c = StatePair::constant(&g, 0.7);
        let lhs = o.resolvent(0.2, &c, 1).unwrap().map(|v| quad.j(v));
        let rhs = o.resolvent(0.2, &c.map(|v| quad.j(v)), 1).unwrap();
        for (a, b) in lhs.x.iter().zip(&rhs.x) {
            assert!((a - b).abs() < 1e-13);
        }
        let zero = o.resolvent(0.2, &StatePair::zeros(&g).map(|v| quad.j(v)), 1).unwrap();
        assert!(zero.x.iter().all(|&v| v == 0.0));
        assert!(verify_jensen(&o, 0.2, &quad, 20, 4).unwrap().passed);
        let quartic = PotentialPair::quartic(Side::Bulk);
        assert!(verify_jensen(&o, 1.0, &quartic, 20, 4).unwrap().passed);
    }

    #[test]
    fn trace_constant_bounds_random_fields() {
        let g = Grid::strip(12, 7, 1.0, 1.0).unwrap();
        let m = trace_constant(&g, 200).unwrap();
        assert!(m.is_finite() && m > 0.0);
        for t in 0..50 {
            let p = gaussian_pair(&g, &mut trial_rng(2, t));
            let u = &p.x;
            let ratio = g.norm_boundary(&g.trace(u).unwrap()) / (g.norm_bulk(u).powi(2) + g.grad_sq_bulk(u)).sqrt();
            assert!(ratio <= m * (1.0 + 1e-9), "{ratio} > {m}");
        }
    }
}
