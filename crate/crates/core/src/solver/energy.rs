//! Energy functionals and duality bookkeeping on discrete states.

use crate::error::{Error, Result};
use crate::geometry::StatePair;
use crate::operator::BulkSurfaceOperator;
use crate::potentials::PotentialPair;

use super::{RunResult, SolverConfig};

fn weighted_sum(w: &[f64], v: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for (m, &r) in w.iter().zip(v) {
        acc += m * f(r)?;
    }
    Ok(acc)
}

/// Ginzburg–Landau energy with the Moreau envelope in place of `j`:
/// `½∫|∇x|² + ∫(j_λ + G)(x) + ε/2∫|∇_Γy|² + ∫(j_{Γ,λ} + G_Γ)(y)`.
pub fn energy_gl(cfg: &SolverConfig, op: &BulkSurfaceOperator, s: &StatePair) -> Result<f64> {
    let g = &cfg.grid;
    let (b, gm) = (&cfg.gamma.bulk, &cfg.gamma.boundary);
    let lam = cfg.lambda;
    let dirichlet = 0.5 * op.energy(&s.x);
    let bulk = weighted_sum(g.mass_bulk(), &s.x, |r| b.regularized_energy(r, lam))?;
    let bnd = weighted_sum(g.mass_boundary(), &s.y, |r| gm.regularized_energy(r, lam))?;
    Ok(dirichlet + bulk + bnd)
}

/// `Σ_D m f(β, x) + Σ_Γ m f(β_Γ, y)`.
fn over_both(cfg: &SolverConfig, s: &StatePair, f: impl Fn(&PotentialPair, f64) -> Result<f64>) -> Result<f64> {
    let g = &cfg.grid;
    Ok(weighted_sum(g.mass_bulk(), &s.x, |r| f(&cfg.gamma.bulk, r))?
        + weighted_sum(g.mass_boundary(), &s.y, |r| f(&cfg.gamma.boundary, r))?)
}

fn pair_terms(pot: &PotentialPair, r: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    let s = pot.beta.resolvent(r, lambda)?;
    let xi = (r - s) / lambda;
    Ok((pot.beta.primitive(s), pot.beta.conjugate(xi)?, xi))
}

/// `Σ m (j(J_λr) + j*(β_λ r))` over bulk and boundary nodes.
pub fn duality_mass(cfg: &SolverConfig, s: &StatePair) -> Result<f64> {
    over_both(cfg, s, |pot, r| pair_terms(pot, r, cfg.lambda).map(|(j, c, _)| j + c))
}

/// Aggregate Fenchel gap `Σ m |j(J_λr) + j*(β_λr) − β_λ(r)·J_λr|`.
pub fn duality_gap(cfg: &SolverConfig, s: &StatePair) -> Result<f64> {
    over_both(cfg, s, |pot, r| pot.fenchel_gap(r, cfg.lambda))
}

/// `⟨β_λ(x), x⟩_H + ⟨β_{Γ,λ}(y), y⟩_{H_Γ}`; every summand is nonnegative.
pub fn xi_pairing(cfg: &SolverConfig, s: &StatePair) -> Result<f64> {
    over_both(cfg, s, |pot, r| pot.beta.yosida(r, cfg.lambda).map(|b| b * r))
}

/// Left side of the discrete energy inequality for one path:
/// `supₙ‖Xⁿ‖²_ℋ + ΣₙΔt(‖∇xⁿ‖² + ε‖∇_Γyⁿ‖²) + ΣₙΔt(⟨ξⁿ,xⁿ⟩ + ⟨ξ_Γⁿ,yⁿ⟩)`,
/// computed from the recorded series alone.
pub fn energy_lhs(result: &RunResult, cfg: &SolverConfig) -> f64 {
    let s = &result.series;
    let sup = s.norm_h.iter().fold(0.0_f64, |a, v| a.max(v * v));
    let integral: f64 = (1..s.len())
        .map(|n| {
            cfg.dt
                * (s.grad_norm[n].powi(2) + cfg.eps * s.surf_grad_norm[n].powi(2) + s.xi_pairing[n])
        })
        .sum();
    sup + integral
}

/// `T·‖ℬ(1)‖²_{L₂}`: the Hilbert–Schmidt size of the diffusion over the run,
/// with multiplicative kinds evaluated at the unit state.
pub fn noise_proxy(cfg: &SolverConfig) -> f64 {
    if cfg.noise.is_silent() {
        return 0.0;
    }
    let basis = cfg.noise.basis(&cfg.grid);
    let one = StatePair::constant(&cfg.grid, 1.0);
    cfg.t_final * crate::noise::hilbert_schmidt_sq(&cfg.noise, &basis, &cfg.grid, &one)
}

/// Nonzero root of `β_λ(c) + π(c) = 0` with the sign of `sign`: the
/// spatially constant stationary state of the regularized deterministic
/// flow, found by bracketing on a geometric grid and bisection.
pub fn stationary_constant(pot: &PotentialPair, lambda: f64, sign: f64) -> Result<f64> {
    let f = |c: f64| -> Result<f64> { Ok(sign * (pot.beta.yosida(c, lambda)? + pot.pi.value(c))) };
    let mut lo = None;
    let mut prev = sign * 2f64.powi(-20);
    let mut fprev = f(prev)?;
    for k in -19..=40 {
        let c = sign * 2f64.powi(k);
        let fc = f(c)?;
        if fprev < 0.0 && fc >= 0.0 {
            lo = Some((prev, c));
            break;
        }
        prev = c;
        fprev = fc;
    }
    let (mut a, mut b) = lo.ok_or(Error::NoConvergence {
        context: "stationary constant bracket",
        iterations: 60,
        residual: fprev,
    })?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if f(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
