//! Scalar calculus for maximal monotone graphs with full domain.
//!
//! A [`MonotoneGraph`] is one of a small catalogue of nondecreasing relations
//! `β ⊂ ℝ × ℝ` with `0 ∈ β(0)`. For each of them this module provides the
//! resolvent `(I + λβ)⁻¹`, the Yosida approximation `β_λ`, the convex primitive
//! `j` with `j(0) = 0`, its Moreau envelope `j_λ` and its Fenchel conjugate `j*`.
//!
//! Kinds and their config spelling:
//!
//! | spelling             | graph                                  |
//! |----------------------|----------------------------------------|
//! | `zero`               | `β ≡ 0`                                |
//! | `linear:a`           | `β(r) = a·r`, `a ≥ 0`                  |
//! | `power:p`            | `β(r) = |r|^p·sign r`, `p ≥ 0`         |
//! | `sinh`               | `β(r) = sinh r`                        |
//! | `piecewise:r/v,...`  | monotone polyline through the knots    |
//!
//! `power:0` is the sign graph, multivalued at the origin. Repeating an
//! abscissa in a piecewise knot list inserts a vertical jump.

pub mod verify;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Absolute tolerance on scalar solves.
pub const SCALAR_TOL: f64 = 1e-12;
const SCALAR_MAX_ITER: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneGraph {
    Zero,
    Linear { a: f64 },
    Power { p: f64 },
    Sinh,
    Piecewise(Polyline),
}

/// A nondecreasing polyline in the `(r, v)` plane, extended by two rays.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    knots: Vec<(f64, f64)>,
    left_slope: f64,
    right_slope: f64,
    /// `∫_{r_0}^{r_k} β` at each knot.
    cumulative: Vec<f64>,
    /// Value of the cumulative integral at `r = 0`.
    offset: f64,
}

impl Polyline {
    /// Builds a monotone polyline. Tails continue with the slope of the
    /// adjacent segment, or flat when that segment is vertical.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Config("piecewise graph needs at least two knots".into()));
        }
        if knots.iter().any(|(r, v)| !r.is_finite() || !v.is_finite()) {
            return Err(Error::Config("piecewise knots must be finite".into()));
        }
        for w in knots.windows(2) {
            let ((r0, v0), (r1, v1)) = (w[0], w[1]);
            if r1 < r0 || v1 < v0 {
                return Err(Error::Config(format!(
                    "piecewise knots must be nondecreasing in both coordinates: ({r0}, {v0}) -> ({r1}, {v1})"
                )));
            }
            if r1 == r0 && v1 == v0 {
                return Err(Error::Config(format!("repeated knot ({r0}, {v0})")));
            }
        }
        let slope = |a: (f64, f64), b: (f64, f64)| {
            if b.0 > a.0 {
                (b.1 - a.1) / (b.0 - a.0)
            } else {
                0.0
            }
        };
        let n = knots.len();
        let left_slope = slope(knots[0], knots[1]);
        let right_slope = slope(knots[n - 2], knots[n - 1]);
        let mut cumulative = Vec::with_capacity(n);
        cumulative.push(0.0);
        for w in knots.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1));
        }
        let mut line = Self {
            knots,
            left_slope,
            right_slope,
            cumulative,
            offset: 0.0,
        };
        let (lo, hi) = line.value_interval(0.0);
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::Config(format!(
                "piecewise graph must satisfy 0 ∈ β(0); β(0) = [{lo}, {hi}]"
            )));
        }
        line.offset = line.cumulative_at(0.0);
        Ok(line)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// The set `β(r)` as a closed interval.
    fn value_interval(&self, r: f64) -> (f64, f64) {
        let k = &self.knots;
        let n = k.len();
        if r < k[0].0 {
            let v = k[0].1 + self.left_slope * (r - k[0].0);
            return (v, v);
        }
        if r > k[n - 1].0 {
            let v = k[n - 1].1 + self.right_slope * (r - k[n - 1].0);
            return (v, v);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in k.windows(2) {
            let ((r0, v0), (r1, v1)) = (w[0], w[1]);
            if r < r0 || r > r1 {
                continue;
            }
            let v = if r1 == r0 {
                lo = lo.min(v0);
                hi = hi.max(v1);
                continue;
            } else {
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if r == k[0].0 {
            lo = lo.min(k[0].1);
        }
        if r == k[n - 1].0 {
            hi = hi.max(k[n - 1].1);
        }
        (lo, hi)
    }

    /// Slope of β to the right of `r` (infinite on a vertical segment).
    fn slope_at(&self, r: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if r < k[0].0 {
            return self.left_slope;
        }
        if r >= k[n - 1].0 {
            return self.right_slope;
        }
        for w in k.windows(2) {
            let ((r0, v0), (r1, v1)) = (w[0], w[1]);
            if r >= r0 && r < r1 {
                return (v1 - v0) / (r1 - r0);
            }
        }
        self.right_slope
    }

    fn cumulative_at(&self, r: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if r <= k[0].0 {
            let v = k[0].1 + self.left_slope * (r - k[0].0);
            return -(k[0].0 - r) * 0.5 * (k[0].1 + v);
        }
        if r >= k[n - 1].0 {
            let v = k[n - 1].1 + self.right_slope * (r - k[n - 1].0);
            return self.cumulative[n - 1] + (r - k[n - 1].0) * 0.5 * (k[n - 1].1 + v);
        }
        for (i, w) in k.windows(2).enumerate() {
            let ((r0, v0), (r1, v1)) = (w[0], w[1]);
            if r >= r0 && r <= r1 && r1 > r0 {
                let v = v0 + (v1 - v0) * (r - r0) / (r1 - r0);
                return self.cumulative[i] + (r - r0) * 0.5 * (v0 + v);
            }
        }
        unreachable!("abscissa {r} inside knot range must hit a segment")
    }

    fn primitive(&self, r: f64) -> f64 {
        (self.cumulative_at(r) - self.offset).max(0.0)
    }

    /// Point on the path where `alpha·r + beta·v = target`; the key must be
    /// nondecreasing along the path.
    fn locate(&self, alpha: f64, beta: f64, target: f64) -> Option<(f64, f64)> {
        let k = &self.knots;
        let n = k.len();
        let key = |(r, v): (f64, f64)| alpha * r + beta * v;
        let first = key(k[0]);
        let last = key(k[n - 1]);
        if target < first {
            let rate = alpha + beta * self.left_slope;
            if rate <= 0.0 {
                return None;
            }
            let t = (first - target) / rate;
            return Some((k[0].0 - t, k[0].1 - self.left_slope * t));
        }
        if target > last {
            let rate = alpha + beta * self.right_slope;
            if rate <= 0.0 {
                return None;
            }
            let t = (target - last) / rate;
            return Some((k[n - 1].0 + t, k[n - 1].1 + self.right_slope * t));
        }
        for w in k.windows(2) {
            let (ka, kb) = (key(w[0]), key(w[1]));
            if target >= ka && target <= kb {
                if kb == ka {
                    return Some(w[0]);
                }
                let t = (target - ka) / (kb - ka);
                return Some((
                    w[0].0 + t * (w[1].0 - w[0].0),
                    w[0].1 + t * (w[1].1 - w[0].1),
                ));
            }
        }
        Some(k[n - 1])
    }

    /// Right derivative of `r ↦ (I + λβ)⁻¹ r`.
    fn resolvent_slope(&self, r: f64, lambda: f64) -> f64 {
        let k = &self.knots;
        let key = |(r, v): (f64, f64)| r + lambda * v;
        let seg = |a: (f64, f64), b: (f64, f64)| {
            let dk = key(b) - key(a);
            (b.0 - a.0) / dk
        };
        if r < key(k[0]) {
            return 1.0 / (1.0 + lambda * self.left_slope);
        }
        for w in k.windows(2) {
            if r >= key(w[0]) && r < key(w[1]) {
                return seg(w[0], w[1]);
            }
        }
        1.0 / (1.0 + lambda * self.right_slope)
    }

    fn resolvent(&self, r: f64, lambda: f64) -> f64 {
        self.locate(1.0, lambda, r)
            .map(|(s, _)| s)
            .expect("s + λβ(s) is onto for λ > 0")
    }

    /// Exact conjugate through the inverse polyline: `j*(s) = s·r − j(r)`
    /// for any `r ∈ β⁻¹(s)`, `+∞` outside the range of β.
    pub fn conjugate_exact(&self, s: f64) -> f64 {
        match self.locate(0.0, 1.0, s) {
            Some((r, _)) => (s * r - self.primitive(r)).max(0.0),
            None => f64::INFINITY,
        }
    }
}

impl MonotoneGraph {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MonotoneGraph::Linear { a } if !(a.is_finite() && a >= 0.0) => {
                Err(Error::Config(format!("linear graph needs a >= 0, got {a}")))
            }
            MonotoneGraph::Power { p } if !(p.is_finite() && p >= 0.0) => {
                Err(Error::Config(format!("power graph needs p >= 0, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Growth exponent of β at infinity, used to scale absolute tolerances.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            MonotoneGraph::Power { p } => p.max(1.0),
            _ => 1.0,
        }
    }

    /// `β(r)` as a closed interval; a single point for continuous kinds.
    pub fn value_interval(&self, r: f64) -> (f64, f64) {
        match self {
            MonotoneGraph::Power { p } if *p == 0.0 && r == 0.0 => (-1.0, 1.0),
            MonotoneGraph::Piecewise(line) => line.value_interval(r),
            _ => {
                let v = self.value(r);
                (v, v)
            }
        }
    }

    /// A selection of `β(r)`; the minimal section at multivalued points.
    pub fn value(&self, r: f64) -> f64 {
        match self {
            MonotoneGraph::Zero => 0.0,
            MonotoneGraph::Linear { a } => a * r,
            MonotoneGraph::Power { p } => {
                if r == 0.0 {
                    0.0
                } else {
                    r.abs().powf(*p).copysign(r)
                }
            }
            MonotoneGraph::Sinh => r.sinh(),
            MonotoneGraph::Piecewise(line) => {
                let (lo, hi) = line.value_interval(r);
                if lo <= 0.0 && hi >= 0.0 {
                    0.0
                } else if lo > 0.0 {
                    lo
                } else {
                    hi
                }
            }
        }
    }

    /// Derivative of β at a point of single-valuedness; `+∞` where the graph
    /// is vertical.
    fn slope(&self, s: f64) -> f64 {
        match self {
            MonotoneGraph::Zero => 0.0,
            MonotoneGraph::Linear { a } => *a,
            MonotoneGraph::Power { p } => {
                let p = *p;
                if p == 0.0 {
                    if s == 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else if s == 0.0 {
                    match p.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0,
                        _ => 0.0,
                    }
                } else {
                    p * s.abs().powf(p - 1.0)
                }
            }
            MonotoneGraph::Sinh => s.cosh(),
            MonotoneGraph::Piecewise(line) => line.slope_at(s),
        }
    }

    /// Convex primitive `j` with `j(0) = 0`.
    pub fn primitive(&self, r: f64) -> f64 {
        match self {
            MonotoneGraph::Zero => 0.0,
            MonotoneGraph::Linear { a } => 0.5 * a * r * r,
            MonotoneGraph::Power { p } => r.abs().powf(p + 1.0) / (p + 1.0),
            MonotoneGraph::Sinh => {
                // cosh r − 1 without cancellation near the origin
                let h = (0.5 * r).sinh();
                2.0 * h * h
            }
            MonotoneGraph::Piecewise(line) => line.primitive(r),
        }
    }

    /// `ln(1 + j(r))`, finite even where `j(r)` overflows.
    pub fn ln1p_primitive(&self, r: f64) -> f64 {
        let from_log = |t: f64| if t > 36.0 { t } else { t.exp().ln_1p() };
        match self {
            MonotoneGraph::Zero => 0.0,
            MonotoneGraph::Linear { a } => {
                if *a == 0.0 || r == 0.0 {
                    0.0
                } else {
                    from_log(2.0 * r.abs().ln() + (0.5 * a).ln())
                }
            }
            MonotoneGraph::Power { p } => {
                if r == 0.0 {
                    0.0
                } else {
                    from_log((p + 1.0) * r.abs().ln() - (p + 1.0).ln())
                }
            }
            MonotoneGraph::Sinh => {
                let a = r.abs();
                // 1 + j = cosh r
                if a > 36.0 {
                    a - std::f64::consts::LN_2
                } else {
                    a.cosh().ln()
                }
            }
            MonotoneGraph::Piecewise(line) => line.primitive(r).ln_1p(),
        }
    }

    /// Unique `s` with `s + λβ(s) ∋ r`.
    pub fn resolvent(&self, r: f64, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if !r.is_finite() {
            return Err(Error::Config(format!("resolvent argument must be finite, got {r}")));
        }
        Ok(match self {
            MonotoneGraph::Zero => r,
            MonotoneGraph::Linear { a } => r / (1.0 + lambda * a),
            MonotoneGraph::Power { p } if *p == 0.0 => {
                (r.abs() - lambda).max(0.0).copysign(r)
            }
            MonotoneGraph::Power { p } if *p == 1.0 => r / (1.0 + lambda),
            MonotoneGraph::Piecewise(line) => line.resolvent(r, lambda),
            _ => self.resolvent_newton(r, lambda)?,
        })
    }

    /// Safeguarded Newton inside the bracket `[min(0, r), max(0, r)]`, which
    /// always contains the root since `β(0) = 0` and `β(r)` has the sign of `r`.
    fn resolvent_newton(&self, r: f64, lambda: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let phi = |s: f64| s + lambda * self.value(s) - r;
        let (mut lo, mut hi) = if r > 0.0 { (0.0, r) } else { (r, 0.0) };
        let mut s = 0.5 * (lo + hi);
        for _ in 0..SCALAR_MAX_ITER {
            let f = phi(s);
            if f == 0.0 {
                return Ok(s);
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let tol = SCALAR_TOL.max(4.0 * f64::EPSILON * s.abs());
            if hi - lo <= tol {
                return Ok(0.5 * (lo + hi));
            }
            let d = 1.0 + lambda * self.slope(s);
            let newton = s - f / d;
            let next = if d.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - s).abs() <= 0.25 * tol {
                return Ok(next);
            }
            s = next;
        }
        Err(Error::NoConvergence {
            context: "scalar resolvent",
            iterations: SCALAR_MAX_ITER,
            residual: phi(s).abs(),
        })
    }

    /// Yosida approximation `β_λ(r) = (r − (I + λβ)⁻¹r)/λ`.
    pub fn yosida(&self, r: f64, lambda: f64) -> Result<f64> {
        let s = self.resolvent(r, lambda)?;
        Ok((r - s) / lambda)
    }

    /// Returns `(β_λ(r), β_λ'(r))`; the derivative is one-sided at kinks.
    pub fn yosida_with_slope(&self, r: f64, lambda: f64) -> Result<(f64, f64)> {
        let s = self.resolvent(r, lambda)?;
        if let MonotoneGraph::Piecewise(line) = self {
            let dj = line.resolvent_slope(r, lambda);
            return Ok(((r - s) / lambda, (1.0 - dj) / lambda));
        }
        let b = self.slope(s);
        let db = if b.is_finite() {
            b / (1.0 + lambda * b)
        } else {
            1.0 / lambda
        };
        Ok(((r - s) / lambda, db))
    }

    /// Moreau envelope `j_λ(r) = min_s |r − s|²/(2λ) + j(s)`.
    pub fn moreau(&self, r: f64, lambda: f64) -> Result<f64> {
        let s = self.resolvent(r, lambda)?;
        Ok((r - s) * (r - s) / (2.0 * lambda) + self.primitive(s))
    }

    /// Fenchel conjugate `j*(s) = sup_r { r s − j(r) }`.
    ///
    /// Closed forms for the zero, linear and power kinds; the sinh and
    /// piecewise kinds go through [`MonotoneGraph::conjugate_search`].
    pub fn conjugate(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        match self {
            MonotoneGraph::Zero => Ok(f64::INFINITY),
            MonotoneGraph::Linear { a } => Ok(if *a == 0.0 {
                f64::INFINITY
            } else {
                s * s / (2.0 * a)
            }),
            MonotoneGraph::Power { p } => Ok(if *p == 0.0 {
                // indicator of [−1, 1]; Yosida values land on ±1 up to rounding
                if s.abs() <= 1.0 + SCALAR_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                let q = (p + 1.0) / p;
                s.abs().powf(q) / q
            }),
            MonotoneGraph::Sinh | MonotoneGraph::Piecewise(_) => self.conjugate_search(s),
        }
    }

    /// Supremum search for `j*`: a log-spaced outward scan brackets the
    /// maximizer (the point where `β` crosses `s`), bisection on the
    /// subgradient condition then pins it down.
    pub fn conjugate_search(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        let dir = s.signum();
        // sup over the ray in direction `dir`; the other ray contributes ≤ 0
        let crosses = |r: f64| {
            let (lo, hi) = self.value_interval(dir * r);
            let (lo, hi) = if dir > 0.0 { (lo, hi) } else { (-hi, -lo) };
            (lo, hi)
        };
        let target = s.abs();
        let mut r_hi = 1e-8;
        loop {
            let (_, hi) = crosses(r_hi);
            if hi >= target {
                break;
            }
            r_hi *= 10.0;
            if r_hi > 1e300 {
                return match self {
                    MonotoneGraph::Piecewise(line) => Ok(line.conjugate_exact(s)),
                    _ => Err(Error::Saturated {
                        s,
                        reason: "no crossing of β within |r| ≤ 1e300".into(),
                    }),
                };
            }
        }
        let mut r_lo = 0.0;
        if crosses(0.0).1 < target {
            for _ in 0..SCALAR_MAX_ITER {
                let mid = 0.5 * (r_lo + r_hi);
                if mid <= r_lo || mid >= r_hi {
                    break;
                }
                if crosses(mid).1 >= target {
                    r_hi = mid;
                } else {
                    r_lo = mid;
                }
                if r_hi - r_lo <= SCALAR_TOL * r_hi.max(1.0) {
                    break;
                }
            }
        } else {
            r_hi = 0.0;
        }
        let r = dir * r_hi;
        let value = s * r - self.primitive(r);
        if !value.is_finite() {
            return Err(Error::Saturated {
                s,
                reason: format!("objective overflowed at maximizer r = {r:e}"),
            });
        }
        Ok(value.max(0.0))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("λ must be positive and finite, got {lambda}")))
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{what}: cannot parse number '{}'", s.trim())))
}

fn parse_knots(body: &str) -> Result<Vec<(f64, f64)>> {
    body.split(',')
        .map(|pair| {
            let (r, v) = pair
                .split_once('/')
                .ok_or_else(|| Error::Config(format!("knot '{}' must be r/v", pair.trim())))?;
            Ok((parse_f64(r, "knot abscissa")?, parse_f64(v, "knot value")?))
        })
        .collect()
}

fn fmt_knots(knots: &[(f64, f64)]) -> String {
    knots
        .iter()
        .map(|(r, v)| format!("{r}/{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl FromStr for MonotoneGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s, None),
        };
        let graph = match (kind, arg) {
            ("zero", None) => MonotoneGraph::Zero,
            ("sinh", None) => MonotoneGraph::Sinh,
            ("linear", Some(a)) => MonotoneGraph::Linear {
                a: parse_f64(a, "linear slope")?,
            },
            ("power", Some(p)) => MonotoneGraph::Power {
                p: parse_f64(p, "power exponent")?,
            },
            ("piecewise", Some(body)) => MonotoneGraph::Piecewise(Polyline::new(parse_knots(body)?)?),
            ("indicator", _) => {
                return Err(Error::Config(
                    "subdifferentials of indicator functions have a bounded domain; \
                     only graphs defined on all of ℝ are supported"
                        .into(),
                ))
            }
            _ => return Err(Error::Config(format!("unknown monotone graph '{s}'"))),
        };
        graph.validate()?;
        Ok(graph)
    }
}

impl fmt::Display for MonotoneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonotoneGraph::Zero => write!(f, "zero"),
            MonotoneGraph::Sinh => write!(f, "sinh"),
            MonotoneGraph::Linear { a } => write!(f, "linear:{a}"),
            MonotoneGraph::Power { p } => write!(f, "power:{p}"),
            MonotoneGraph::Piecewise(line) => write!(f, "piecewise:{}", fmt_knots(&line.knots)),
        }
    }
}

/// Lipschitz perturbation `π` and its primitive `G` with `G(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Zero,
    /// `π(r) = a·r + b`
    Affine { a: f64, b: f64 },
    /// Linear interpolation through strictly increasing abscissae, extended
    /// with the end slopes.
    Piecewise { knots: Vec<(f64, f64)> },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Perturbation::Zero => Ok(()),
            Perturbation::Affine { a, b } => {
                if a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("affine perturbation needs finite a, b".into()))
                }
            }
            Perturbation::Piecewise { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Config("piecewise perturbation needs two knots".into()));
                }
                if knots.iter().any(|(r, v)| !r.is_finite() || !v.is_finite()) {
                    return Err(Error::Config("piecewise knots must be finite".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Config(
                        "piecewise perturbation needs strictly increasing abscissae".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Affine { a, .. } => a.abs(),
            Perturbation::Piecewise { knots } => knots
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }

    fn segment(knots: &[(f64, f64)], r: f64) -> usize {
        let n = knots.len();
        knots[1..n - 1].partition_point(|k| k.0 <= r)
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Affine { a, b } => a * r + b,
            Perturbation::Piecewise { knots } => {
                let i = Self::segment(knots, r);
                let ((r0, v0), (r1, v1)) = (knots[i], knots[i + 1]);
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
    }

    /// `G(r) = ∫_0^r π`.
    pub fn primitive(&self, r: f64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Affine { a, b } => 0.5 * a * r * r + b * r,
            Perturbation::Piecewise { knots } => {
                let from_origin = |r: f64| -> f64 {
                    // integral from 0 to r, walking across knots
                    let (a, b, sign) = if r >= 0.0 { (0.0, r, 1.0) } else { (r, 0.0, -1.0) };
                    let mut pts = vec![a];
                    pts.extend(knots.iter().map(|k| k.0).filter(|&k| k > a && k < b));
                    pts.push(b);
                    let area: f64 = pts
                        .windows(2)
                        .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
                        .sum();
                    sign * area
                };
                from_origin(r)
            }
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s, None),
        };
        let pert = match (kind, arg) {
            ("zero", None) => Perturbation::Zero,
            ("affine", Some(body)) => {
                let mut parts = body.split(',');
                let a = parse_f64(parts.next().unwrap_or(""), "affine slope")?;
                let b = match parts.next() {
                    Some(b) => parse_f64(b, "affine offset")?,
                    None => 0.0,
                };
                if parts.next().is_some() {
                    return Err(Error::Config(format!("affine takes at most two numbers: '{s}'")));
                }
                Perturbation::Affine { a, b }
            }
            ("piecewise", Some(body)) => Perturbation::Piecewise {
                knots: parse_knots(body)?,
            },
            _ => return Err(Error::Config(format!("unknown perturbation '{s}'"))),
        };
        pert.validate()?;
        Ok(pert)
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Zero => write!(f, "zero"),
            Perturbation::Affine { a, b } => write!(f, "affine:{a},{b}"),
            Perturbation::Piecewise { knots } => write!(f, "piecewise:{}", fmt_knots(knots)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Side {
    Bulk,
    Boundary,
}

/// A double-well split `F = j + G`: the convex part through its graph `β`,
/// the Lipschitz part through `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPair {
    pub beta: MonotoneGraph,
    pub pi: Perturbation,
    pub side: Side,
}

impl PotentialPair {
    pub fn new(beta: MonotoneGraph, pi: Perturbation, side: Side) -> Result<Self> {
        beta.validate()?;
        pi.validate()?;
        Ok(Self { beta, pi, side })
    }

    /// The classical quartic well `¼(r² − 1)²` up to its additive constant.
    pub fn quartic(side: Side) -> Self {
        Self {
            beta: MonotoneGraph::Power { p: 3.0 },
            pi: Perturbation::Affine { a: -1.0, b: 0.0 },
            side,
        }
    }

    pub fn j(&self, r: f64) -> f64 {
        self.beta.primitive(r)
    }

    pub fn c_pi(&self) -> f64 {
        self.pi.lipschitz()
    }

    pub fn resolvent_point(&self, r: f64, lambda: f64) -> Result<f64> {
        self.beta.resolvent(r, lambda)
    }

    pub fn yosida_point(&self, r: f64, lambda: f64) -> Result<f64> {
        self.beta.yosida(r, lambda)
    }

    pub fn moreau_point(&self, r: f64, lambda: f64) -> Result<f64> {
        self.beta.moreau(r, lambda)
    }

    pub fn conjugate_point(&self, s: f64) -> Result<f64> {
        self.beta.conjugate(s)
    }

    /// `|j(s) + j*(β_λ(r)) − β_λ(r)·s|` with `s = (I + λβ)⁻¹ r`: the Fenchel
    /// equality at the resolvent point, which holds exactly because
    /// `β_λ(r) ∈ β(s)`.
    pub fn fenchel_gap(&self, r: f64, lambda: f64) -> Result<f64> {
        let s = self.beta.resolvent(r, lambda)?;
        let b = (r - s) / lambda;
        let conj = self.beta.conjugate(b)?;
        Ok((self.beta.primitive(s) + conj - b * s).abs())
    }

    /// Regularized local energy `j_λ(r) + G(r)`.
    pub fn regularized_energy(&self, r: f64, lambda: f64) -> Result<f64> {
        Ok(self.beta.moreau(r, lambda)? + self.pi.primitive(r))
    }

    /// `max j(r)/j(−r)` over log-spaced `|r| ∈ [1, 1e6]`, computed in log space.
    pub fn symmetry_ratio(&self) -> f64 {
        log_grid()
            .flat_map(|r| [r, -r])
            .map(|r| {
                let a = self.beta.ln1p_primitive(r);
                let b = self.beta.ln1p_primitive(-r);
                if a == 0.0 && b == 0.0 {
                    1.0
                } else if b == 0.0 {
                    f64::INFINITY
                } else {
                    // j = e^{ln(1+j)} − 1, expressed through exp_m1 for small values
                    let (ja, jb) = (a.exp_m1(), b.exp_m1());
                    if ja.is_finite() && jb.is_finite() {
                        ja / jb
                    } else {
                        (a - b).exp()
                    }
                }
            })
            .fold(0.0, f64::max)
    }
}

fn log_grid() -> impl Iterator<Item = f64> {
    // 1 .. 1e6, ten points per decade
    (0..=60).map(|k| 10f64.powf(k as f64 / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Hypothesis {
    H1,
    H2,
    H3,
}

impl FromStr for Hypothesis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H1" | "h1" => Ok(Hypothesis::H1),
            "H2" | "h2" => Ok(Hypothesis::H2),
            "H3" | "h3" => Ok(Hypothesis::H3),
            other => Err(Error::Config(format!("unknown hypothesis '{other}' (H1, H2, H3)"))),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GrowthCheck {
    pub claim: String,
    /// Fitted constant (`C` for a control relation, `p` for a polynomial bound).
    pub fitted: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisReport {
    pub hypothesis: Hypothesis,
    pub checks: Vec<GrowthCheck>,
    pub symmetry_bulk: f64,
    pub symmetry_boundary: f64,
    pub passed: bool,
}

/// `γ = (β, β_Γ)` together with the perturbations and the declared growth
/// hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaOperator {
    pub bulk: PotentialPair,
    pub boundary: PotentialPair,
    pub hypothesis: Hypothesis,
}

impl GammaOperator {
    pub fn quartic() -> Self {
        Self {
            bulk: PotentialPair::quartic(Side::Bulk),
            boundary: PotentialPair::quartic(Side::Boundary),
            hypothesis: Hypothesis::H1,
        }
    }

    pub fn c_p(&self) -> f64 {
        self.bulk.c_pi().max(self.boundary.c_pi())
    }

    /// Finite-sample check of the declared growth hypothesis for the
    /// two-dimensional strip. `eps` selects between the ε > 0 and ε = 0
    /// variants of H3.
    pub fn check_hypothesis(&self, eps: f64) -> HypothesisReport {
        let (jb, jg) = (&self.bulk.beta, &self.boundary.beta);
        let mut checks = Vec::new();
        let mut control = |name: &str, a: &MonotoneGraph, b: &MonotoneGraph| {
            checks.push(control_check(name, a, b));
        };
        match self.hypothesis {
            Hypothesis::H1 => {
                control("j <= C(1 + j_Γ)", jb, jg);
                control("j_Γ <= C(1 + j)", jg, jb);
            }
            Hypothesis::H2 => {
                control("j <= C(1 + j_Γ)", jb, jg);
                checks.push(polynomial_check("j_Γ <= C(1 + |r|^p)", jg));
            }
            Hypothesis::H3 => {
                control("j_Γ <= C(1 + j)", jg, jb);
                if eps == 0.0 {
                    checks.push(polynomial_check("j <= C(1 + |r|^p)", jb));
                }
            }
        }
        let symmetry_bulk = self.bulk.symmetry_ratio();
        let symmetry_boundary = self.boundary.symmetry_ratio();
        let passed = checks.iter().all(|c| c.passed)
            && symmetry_bulk.is_finite()
            && symmetry_boundary.is_finite();
        HypothesisReport {
            hypothesis: self.hypothesis,
            checks,
            symmetry_bulk,
            symmetry_boundary,
            passed,
        }
    }
}

/// `a ≲ 1 + b`: the log-ratio `ln(1+a) − ln(1+b)` may not grow over the last
/// sampled decade by more than `ln 2` beyond its earlier maximum.
fn control_check(name: &str, a: &MonotoneGraph, b: &MonotoneGraph) -> GrowthCheck {
    let diff = |r: f64| a.ln1p_primitive(r) - b.ln1p_primitive(r);
    let (early, late) = split_tail(diff);
    GrowthCheck {
        claim: name.to_string(),
        fitted: early.max(late).exp(),
        passed: late <= early + std::f64::consts::LN_2,
    }
}

/// `a ≲ 1 + |r|^p` for some `p`: the exponent `ln(1+a)/ln(1+|r|)` may grow
/// over the last decade by at most 10% of its earlier maximum.
fn polynomial_check(name: &str, a: &MonotoneGraph) -> GrowthCheck {
    let exponent = |r: f64| a.ln1p_primitive(r) / r.abs().ln_1p();
    let (early, late) = split_tail(exponent);
    GrowthCheck {
        claim: name.to_string(),
        fitted: early.max(late),
        passed: late <= 1.1 * early + 0.1,
    }
}

/// Maxima over `|r| < 1e5` and over `|r| ∈ [1e5, 1e6]`, both signs.
fn split_tail(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut early = f64::NEG_INFINITY;
    let mut late = f64::NEG_INFINITY;
    for r in log_grid() {
        let v = f(r).max(f(-r));
        if r < 1e5 {
            early = early.max(v);
        } else {
            late = late.max(v);
        }
    }
    (early, late)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn cubic() -> MonotoneGraph {
        MonotoneGraph::Power { p: 3.0 }
    }

    #[test]
    fn resolvent_examples() {
        assert_eq!(cubic().resolvent(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(MonotoneGraph::Linear { a: 1.0 }.resolvent(2.0, 1.0).unwrap(), 1.0);
        let oracle = bisect(|s| s + s * s * s - 1.0, 0.0, 1.0);
        let got = cubic().resolvent(1.0, 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.6823278).abs() < 1e-7);
    }

    #[test]
    fn yosida_examples() {
        for g in [cubic(), MonotoneGraph::Sinh, MonotoneGraph::Zero, MonotoneGraph::Power { p: 0.0 }] {
            assert_eq!(g.yosida(0.0, 0.3).unwrap(), 0.0);
        }
        assert_eq!(MonotoneGraph::Linear { a: 1.0 }.yosida(2.0, 1.0).unwrap(), 1.0);
        let oracle = 1.0 - bisect(|s| s + s * s * s - 1.0, 0.0, 1.0);
        assert!((cubic().yosida(1.0, 1.0).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.3176722).abs() < 1e-7);
    }

    #[test]
    fn moreau_examples() {
        let quartic = PotentialPair::quartic(Side::Bulk);
        assert_eq!(quartic.moreau_point(0.0, 1.0).unwrap(), 0.0);
        let quad = PotentialPair::new(MonotoneGraph::Linear { a: 1.0 }, Perturbation::Zero, Side::Bulk)
            .unwrap();
        assert!((quad.moreau_point(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // direct minimization of |1 − s|²/2 + s⁴/4 by golden section
        let obj = |s: f64| 0.5 * (1.0 - s) * (1.0 - s) + 0.25 * s.powi(4);
        let (mut a, mut b) = (-2.0_f64, 2.0_f64);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if obj(c) < obj(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = obj(0.5 * (a + b));
        let got = quartic.moreau_point(1.0, 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.104647).abs() < 5e-6);
    }

    #[test]
    fn conjugate_examples() {
        let quad = MonotoneGraph::Linear { a: 1.0 };
        assert_eq!(quad.conjugate(0.0).unwrap(), 0.0);
        assert_eq!(cubic().conjugate(0.0).unwrap(), 0.0);
        assert!((quad.conjugate(2.0).unwrap() - 2.0).abs() < 1e-15);
        let got = cubic().conjugate(1.0).unwrap();
        assert!((got - 0.75).abs() < 1e-15);
        // grid supremum of r − r⁴/4
        let grid = (0..=200_000)
            .map(|k| -2.0 + 4.0 * k as f64 / 200_000.0)
            .map(|r| r - 0.25 * r.powi(4))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((got - grid).abs() < 1e-9);
    }

    #[test]
    fn sinh_conjugate_matches_closed_form() {
        let g = MonotoneGraph::Sinh;
        for s in [-50.0, -3.0, -0.2, 0.7, 4.0, 1e3, 1e8] {
            let exact = s * f64::asinh(s) - (1.0 + s * s).sqrt() + 1.0;
            let got = g.conjugate(s).unwrap();
            assert!((got - exact).abs() <= 1e-9 * (1.0 + exact.abs()), "s = {s}: {got} vs {exact}");
        }
    }

    #[test]
    fn sinh_conjugate_saturates_at_extreme_argument() {
        let err = MonotoneGraph::Sinh.conjugate(1e308).unwrap_err();
        assert!(matches!(err, Error::Saturated { .. }), "{err}");
    }

    #[test]
    fn fenchel_gap_examples() {
        let quartic = PotentialPair::quartic(Side::Bulk);
        assert_eq!(quartic.fenchel_gap(0.0, 1.0).unwrap(), 0.0);
        let quad = PotentialPair::new(MonotoneGraph::Linear { a: 1.0 }, Perturbation::Zero, Side::Bulk)
            .unwrap();
        assert_eq!(quad.fenchel_gap(2.0, 1.0).unwrap(), 0.0);
        assert!(quartic.fenchel_gap(1.0, 1.0).unwrap() <= 1e-8);
    }

    #[test]
    fn sign_graph_resolvent_is_soft_threshold() {
        let g = MonotoneGraph::Power { p: 0.0 };
        assert_eq!(g.resolvent(0.3, 0.5).unwrap(), 0.0);
        assert!((g.resolvent(-2.0, 0.5).unwrap() + 1.5).abs() < 1e-15);
        assert_eq!(g.value_interval(0.0), (-1.0, 1.0));
        assert!((g.yosida(0.25, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(g.conjugate(0.5).unwrap(), 0.0);
        assert_eq!(g.conjugate(1.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn piecewise_jump_graph() {
        // sign-like jump at 0 with slope 1 beyond |r| = 1
        let g: MonotoneGraph = "piecewise:-2/-2,-1/-1,0/-1,0/1,1/1,2/2".parse().unwrap();
        assert_eq!(g.value_interval(0.0), (-1.0, 1.0));
        assert_eq!(g.value(0.5), 1.0);
        // s + λβ(s) = r on the flat part: s = r − λ
        assert!((g.resolvent(1.2, 0.5).unwrap() - 0.7).abs() < 1e-15);
        // inside the jump the resolvent is 0
        assert_eq!(g.resolvent(0.3, 0.5).unwrap(), 0.0);
        // j(r) = |r| on [−1, 1], then |r| + (|r| − 1)²/2
        assert!((g.primitive(0.5) - 0.5).abs() < 1e-15);
        assert!((g.primitive(-3.0) - 5.0).abs() < 1e-12);
        if let MonotoneGraph::Piecewise(line) = &g {
            for s in [-4.0, -1.0, -0.3, 0.0, 0.9, 1.5, 7.0] {
                let search = g.conjugate_search(s).unwrap();
                assert!((line.conjugate_exact(s) - search).abs() < 1e-9, "s = {s}");
            }
        }
    }

    #[test]
    fn piecewise_rejects_bad_knots() {
        assert!("piecewise:0/0".parse::<MonotoneGraph>().is_err());
        assert!("piecewise:0/1,1/0".parse::<MonotoneGraph>().is_err());
        assert!("piecewise:1/2,2/3".parse::<MonotoneGraph>().is_err());
        assert!("piecewise:0/0,0/0,1/1".parse::<MonotoneGraph>().is_err());
    }

    #[test]
    fn indicator_graphs_are_rejected() {
        let err = "indicator:-1,1".parse::<MonotoneGraph>().unwrap_err();
        assert!(err.to_string().contains("bounded domain"));
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["zero", "sinh", "linear:2.5", "power:3", "piecewise:-1/-1,0/0,1/3"] {
            let g: MonotoneGraph = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        for s in ["zero", "affine:-1,0", "piecewise:-1/1,0/0,2/1"] {
            let p: Perturbation = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!("affine:-1".parse::<Perturbation>().unwrap(), Perturbation::Affine { a: -1.0, b: 0.0 });
        assert!("power:-1".parse::<MonotoneGraph>().is_err());
        assert!("cubic".parse::<MonotoneGraph>().is_err());
    }

    #[test]
    fn perturbation_primitive_and_lipschitz() {
        let p: Perturbation = "piecewise:-1/1,0/0,2/1".parse().unwrap();
        assert_eq!(p.lipschitz(), 1.0);
        assert!((p.value(4.0) - 2.0).abs() < 1e-15);
        // ∫_0^2 r/2 = 1, ∫_0^{-1} (−r) = −1/2
        assert!((p.primitive(2.0) - 1.0).abs() < 1e-15);
        assert!((p.primitive(-1.0) + 0.5).abs() < 1e-15);
        let q = Perturbation::Affine { a: -1.0, b: 0.5 };
        assert!((q.primitive(2.0) - (-2.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn quartic_well_energy_at_pure_state() {
        let w = PotentialPair::quartic(Side::Bulk);
        assert!((w.j(1.0) + w.pi.primitive(1.0) + 0.25).abs() < 1e-15);
    }

    // j − j_λ ≈ λβ(r)²/2, so the 1e-3 gap at λ = 2⁻¹⁰ is reached for |r| ≲ 1
    #[test]
    fn moreau_increases_to_primitive() {
        for g in [cubic(), MonotoneGraph::Sinh, MonotoneGraph::Linear { a: 2.0 }] {
            for r in [-1.0, -0.5, 0.2, 0.8, 1.0] {
                let mut prev = 0.0;
                let mut lam = 1.0;
                let mut last = 0.0;
                for _ in 0..=10 {
                    let v = g.moreau(r, lam).unwrap();
                    assert!(v >= prev - 1e-15);
                    prev = v;
                    last = v;
                    lam *= 0.5;
                }
                let j = g.primitive(r);
                assert!(last <= j + 1e-15);
                assert!(j - last < 1e-3 * (1.0 + j), "{g} at {r}: {last} vs {j}");
            }
        }
    }

    #[test]
    fn conjugate_is_superlinear_for_power_kinds() {
        for p in [1.5, 2.0, 3.0, 5.0] {
            let g = MonotoneGraph::Power { p };
            let ratios: Vec<f64> = [10.0, 1e2, 1e3, 1e4]
                .iter()
                .map(|&s| g.conjugate(s).unwrap() / s)
                .collect();
            assert!(ratios.windows(2).all(|w| w[1] > w[0]), "p = {p}: {ratios:?}");
        }
    }

    #[test]
    fn hypothesis_checks() {
        let mut gamma = GammaOperator::quartic();
        assert!(gamma.check_hypothesis(0.0).passed);
        // quartic bulk vs quadratic boundary: j_Γ ≲ 1 + j only
        gamma.boundary.beta = MonotoneGraph::Linear { a: 1.0 };
        assert!(!gamma.check_hypothesis(0.1).passed);
        gamma.hypothesis = Hypothesis::H3;
        assert!(gamma.check_hypothesis(0.1).passed);
        // exponential bulk growth is fine for H3 with ε > 0 but not ε = 0
        gamma.bulk.beta = MonotoneGraph::Sinh;
        assert!(gamma.check_hypothesis(0.1).passed);
        assert!(!gamma.check_hypothesis(0.0).passed);
        gamma.hypothesis = Hypothesis::H2;
        assert!(!gamma.check_hypothesis(0.1).passed);
    }

    #[test]
    fn symmetry_ratio_is_reported() {
        let w = PotentialPair::quartic(Side::Bulk);
        assert!((w.symmetry_ratio() - 1.0).abs() < 1e-12);
        let skew = PotentialPair::new(
            "piecewise:-1/-1,0/0,1/3".parse().unwrap(),
            Perturbation::Zero,
            Side::Bulk,
        )
        .unwrap();
        assert!((skew.symmetry_ratio() - 3.0).abs() < 1e-9);
        let one_sided = PotentialPair::new(
            "piecewise:0/0,1/1".parse().unwrap(),
            Perturbation::Zero,
            Side::Bulk,
        )
        .unwrap();
        assert!(one_sided.symmetry_ratio().is_finite());
    }
}
