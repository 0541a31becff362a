//! Sampled checks of the scalar calculus against its defining properties
//! and against a bisection oracle that only uses `β` itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MonotoneGraph;
use crate::error::Result;
use crate::operator::verify::CheckReport;

/// Graphs exercised by default: every kind, including multivalued ones.
pub fn catalogue() -> Vec<MonotoneGraph> {
    [
        "zero",
        "linear:2",
        "power:3",
        "power:1.5",
        "power:0",
        "sinh",
        "piecewise:-1/-1,0/0,0/0.5,1/2",
    ]
    .iter()
    .map(|s| s.parse().expect("catalogue entries parse"))
    .collect()
}

/// Solves `r ∈ s + λβ(s)` by bisection on the value intervals of `β`.
pub fn resolvent_oracle(graph: &MonotoneGraph, r: f64, lambda: f64) -> f64 {
    let (mut a, mut b) = (r.min(0.0), r.max(0.0));
    for _ in 0..200 {
        let s = 0.5 * (a + b);
        if s == a || s == b {
            break;
        }
        let (lo, hi) = graph.value_interval(s);
        if s + lambda * hi < r {
            a = s;
        } else if s + lambda * lo > r {
            b = s;
        } else {
            return s;
        }
    }
    0.5 * (a + b)
}

#[derive(Default)]
struct Worst {
    value: f64,
    at: Option<String>,
}

impl Worst {
    fn update(&mut self, v: f64, label: impl FnOnce() -> String) {
        if v > self.value || self.at.is_none() {
            self.value = v;
            self.at = Some(label());
        }
    }

    fn report(self, name: &str, tol: f64) -> CheckReport {
        CheckReport::at_most(name, self.value, tol).with_detail(self.at.unwrap_or_default())
    }
}

/// `samples` random `(graph, r, λ)` triples with `r ∈ [−5, 5]` and
/// `λ ∈ [10⁻³, 1]` log-uniform; graphs cycle through `graphs`.
pub fn verify_calculus(graphs: &[MonotoneGraph], samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lip_j = Worst::default();
    let mut lip_y = Worst::default();
    let mut moreau = Worst::default();
    let mut gap = Worst::default();
    let mut oracle = Worst::default();
    for i in 0..samples {
        let g = &graphs[i % graphs.len()];
        let r1: f64 = rng.random_range(-5.0..=5.0);
        let r2: f64 = rng.random_range(-5.0..=5.0);
        let lambda = 10f64.powf(rng.random_range(-3.0..=0.0));
        let label = || format!("{g} at r = {r1}, {r2}, lambda = {lambda}");
        let (j1, j2) = (g.resolvent(r1, lambda)?, g.resolvent(r2, lambda)?);
        let dr = (r1 - r2).abs();
        if dr > 1e-6 {
            lip_j.update((j1 - j2).abs() / dr, label);
            let (y1, y2) = (g.yosida(r1, lambda)?, g.yosida(r2, lambda)?);
            lip_y.update(lambda * (y1 - y2).abs() / dr, label);
        }
        let j = g.primitive(r1);
        moreau.update((g.moreau(r1, lambda)? - j) / (1.0 + j), label);
        // Fenchel equality at the resolvent point: ξ = β_λ(r) ∈ β(J_λ r)
        let xi = (r1 - j1) / lambda;
        let fg = (g.primitive(j1) + g.conjugate(xi)? - xi * j1).abs();
        gap.update(fg / (1.0 + r1.abs().powf(g.growth_exponent())), label);
        oracle.update((j1 - resolvent_oracle(g, r1, lambda)).abs(), label);
    }
    let cubic: MonotoneGraph = "power:3".parse().expect("power graph parses");
    let root = cubic.resolvent(1.0, 1.0)?;
    let root_err = (root - resolvent_oracle(&cubic, 1.0, 1.0)).abs();
    Ok(vec![
        lip_j.report("resolvent 1-Lipschitz", 1.0 + 1e-10),
        lip_y.report("Yosida (1/lambda)-Lipschitz", 1.0 + 1e-9),
        moreau.report("Moreau envelope below j (relative excess)", 1e-12),
        gap.report("Fenchel gap / (1+|r|^p)", 1e-8),
        oracle.report("resolvent vs bisection oracle", 1e-10),
        CheckReport::at_most("root of s+s^3=1 vs oracle", root_err, 1e-10).with_detail(format!("root = {root}")),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_handles_jumps() {
        let sign: MonotoneGraph = "power:0".parse().unwrap();
        assert!(resolvent_oracle(&sign, 0.3, 1.0).abs() < 1e-12);
        assert!((resolvent_oracle(&sign, 1.5, 1.0) - 0.5).abs() < 1e-12);
        let cubic: MonotoneGraph = "power:3".parse().unwrap();
        assert!((resolvent_oracle(&cubic, 1.0, 1.0) - 0.682_327_803_828_019_3).abs() < 1e-12);
    }

    #[test]
    fn catalogue_passes_sampled_checks() {
        let reports = verify_calculus(&catalogue(), 2000, 1).unwrap();
        assert!(reports.iter().all(|r| r.passed), "{reports:#?}");
    }
}
