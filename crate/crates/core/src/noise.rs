//! Truncated spectral Q-Wiener noise for the bulk and the boundary.
//!
//! An increment over a step of length `dt` is `ΔW = Σ_k a_k ξ_k e_k` with
//! `ξ_k ~ N(0, dt)` independent and `a_k = k^{−decay−1/2}`. Bulk modes are
//! tensor products of periodic Fourier modes in `x` and cosine modes in `y`,
//! boundary modes are periodic Fourier modes on each wall, all normalized in
//! the continuous `L²`.
//!
//! Draws are keyed by `(seed, trajectory, step, side)`: the generator for a
//! given step is rebuilt from the key, so a path does not depend on how many
//! other paths ran before it or in which order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Grid, GridMode, StatePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionKind {
    /// `B(x) w = σ₀ w`
    Additive,
    /// `B(x) w = σ₀ x w`
    LinearMultiplicative,
    /// `B(x) w = σ₀ x/(1+|x|) w`
    BoundedMultiplicative,
}

impl DiffusionKind {
    pub fn coefficient(self, sigma0: f64, x: f64) -> f64 {
        match self {
            DiffusionKind::Additive => sigma0,
            DiffusionKind::LinearMultiplicative => sigma0 * x,
            DiffusionKind::BoundedMultiplicative => sigma0 * x / (1.0 + x.abs()),
        }
    }

    pub fn is_additive(self) -> bool {
        self == DiffusionKind::Additive
    }
}

impl FromStr for DiffusionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "additive" => Ok(DiffusionKind::Additive),
            "linear-multiplicative" => Ok(DiffusionKind::LinearMultiplicative),
            "bounded-multiplicative" => Ok(DiffusionKind::BoundedMultiplicative),
            other => Err(Error::Config(format!(
                "unknown noise kind '{other}' (additive, linear-multiplicative, bounded-multiplicative)"
            ))),
        }
    }
}

impl fmt::Display for DiffusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiffusionKind::Additive => "additive",
            DiffusionKind::LinearMultiplicative => "linear-multiplicative",
            DiffusionKind::BoundedMultiplicative => "bounded-multiplicative",
        })
    }
}

/// Increments are pre-smoothed by `(I + δ𝒞_ε)⁻ᵐ` when set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub delta: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Modes per direction in the bulk.
    pub n_modes_bulk: usize,
    /// Modes per boundary circle.
    pub n_modes_boundary: usize,
    pub decay: f64,
    pub kind: DiffusionKind,
    pub sigma0: f64,
    pub mollify: Option<Mollifier>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            n_modes_bulk: 16,
            n_modes_boundary: 16,
            decay: 1.0,
            kind: DiffusionKind::Additive,
            sigma0: 0.0,
            mollify: None,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.decay.is_finite() && self.decay > 0.5) {
            problems.push(format!("noise.decay must be > 1/2, got {}", self.decay));
        }
        if !(self.sigma0.is_finite() && self.sigma0 >= 0.0) {
            problems.push(format!("noise.sigma0 must be >= 0, got {}", self.sigma0));
        }
        if let Some(m) = self.mollify {
            if !(m.delta.is_finite() && m.delta > 0.0) || m.m == 0 {
                problems.push("noise.mollify_delta must be > 0 with noise.mollify_m >= 1".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigList(problems))
        }
    }

    pub fn is_silent(&self) -> bool {
        self.sigma0 == 0.0 || (self.n_modes_bulk == 0 && self.n_modes_boundary == 0)
    }

    pub fn amplitude(&self, k: usize) -> f64 {
        (k as f64).powf(-self.decay - 0.5)
    }

    /// Mode fields on the nodes of `grid`, amplitudes included.
    pub fn basis(&self, grid: &Grid) -> NoiseBasis {
        let px_cap = if grid.mode() == GridMode::Interval { 1 } else { grid.nx() };
        let mut bulk_index: Vec<(usize, usize)> = (0..self.n_modes_bulk.min(px_cap))
            .flat_map(|p| (0..self.n_modes_bulk.min(grid.ny())).map(move |q| (p, q)))
            .collect();
        bulk_index.sort_by_key(|&(p, q)| (p + q, p));
        let bulk = bulk_index
            .iter()
            .enumerate()
            .map(|(rank, &(p, q))| {
                let a = self.amplitude(rank + 1);
                (0..grid.n_bulk())
                    .map(|n| {
                        let (x, y) = grid.coords(n);
                        a * fourier(p, x, grid.lx()) * cosine(q, y, grid.ly())
                    })
                    .collect()
            })
            .collect();
        let mut bnd_index: Vec<(usize, usize)> = (0..self.n_modes_boundary.min(px_cap))
            .flat_map(|p| [(p, 0), (p, 1)])
            .collect();
        bnd_index.sort();
        let nx = grid.nx();
        let boundary = bnd_index
            .iter()
            .enumerate()
            .map(|(rank, &(p, circle))| {
                let a = self.amplitude(rank + 1);
                (0..grid.n_boundary())
                    .map(|k| {
                        if k / nx == circle {
                            a * fourier(p, grid.boundary_coord(k), grid.lx())
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        NoiseBasis { bulk, boundary }
    }
}

/// Periodic Fourier function of index `p` on `[0, L)`: constant, then
/// alternating cosines and sines of increasing frequency.
fn fourier(p: usize, x: f64, l: f64) -> f64 {
    if p == 0 {
        return (1.0 / l).sqrt();
    }
    let freq = p.div_ceil(2);
    let arg = 2.0 * PI * freq as f64 * x / l;
    let c = (2.0 / l).sqrt();
    if p % 2 == 1 {
        c * arg.cos()
    } else {
        c * arg.sin()
    }
}

fn cosine(q: usize, y: f64, l: f64) -> f64 {
    if q == 0 {
        (1.0 / l).sqrt()
    } else {
        (2.0 / l).sqrt() * (q as f64 * PI * y / l).cos()
    }
}

/// Mode fields `a_k e_k` evaluated on a grid.
#[derive(Debug, Clone)]
pub struct NoiseBasis {
    pub bulk: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
}

impl NoiseBasis {
    /// `Σ_k a_k² e_k(z)²` at every bulk node and every boundary node.
    pub fn pointwise_variance(&self, n_bulk: usize, n_boundary: usize) -> (Vec<f64>, Vec<f64>) {
        let acc = |modes: &[Vec<f64>], n: usize| {
            let mut v = vec![0.0; n];
            for e in modes {
                for (vi, ei) in v.iter_mut().zip(e) {
                    *vi += ei * ei;
                }
            }
            v
        };
        (acc(&self.bulk, n_bulk), acc(&self.boundary, n_boundary))
    }
}

/// Identifies one sample path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub trajectory: u64,
}

impl StreamKey {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self { seed, trajectory }
    }

    /// Generator for `(step, side)`; side 0 is the bulk, 1 the boundary.
    pub fn rng(&self, step: u64, side: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trajectory.to_le_bytes());
        key[16..24].copy_from_slice(b"dynabc-w");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(2 * step + side);
        rng
    }

    /// Generator for auxiliary draws (initial data, perturbation
    /// directions); uses stream ids from the top of the range, which no
    /// step reaches.
    pub fn aux_rng(&self, tag: u64) -> ChaCha8Rng {
        let mut rng = self.rng(0, 0);
        rng.set_stream(u64::MAX - tag);
        rng
    }
}

/// Noise increment on bulk and boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Increment {
    pub bulk: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl Increment {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            bulk: vec![0.0; grid.n_bulk()],
            boundary: vec![0.0; grid.n_boundary()],
        }
    }

    fn add_assign(&mut self, other: &Increment) {
        for (a, b) in self.bulk.iter_mut().zip(&other.bulk) {
            *a += b;
        }
        for (a, b) in self.boundary.iter_mut().zip(&other.boundary) {
            *a += b;
        }
    }

    /// FNV-1a over the bit patterns, for frozen-path assertions.
    pub fn checksum(&self, mut h: u64) -> u64 {
        for v in self.bulk.iter().chain(&self.boundary) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

pub const CHECKSUM_SEED: u64 = 0xcbf2_9ce4_8422_2325;

fn combine(modes: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for e in modes {
        let xi: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
        for (o, v) in out.iter_mut().zip(e) {
            *o += xi * v;
        }
    }
    out
}

/// One increment over a step of length `dt`, deterministic in `(key, step)`.
pub fn sample_increment(basis: &NoiseBasis, grid: &Grid, dt: f64, key: StreamKey, step: u64) -> Increment {
    if dt == 0.0 {
        return Increment::zeros(grid);
    }
    let scale = dt.sqrt();
    Increment {
        bulk: combine(&basis.bulk, grid.n_bulk(), &mut key.rng(step, 0), scale),
        boundary: combine(&basis.boundary, grid.n_boundary(), &mut key.rng(step, 1), scale),
    }
}

/// Increment over `[step·dt, (step+1)·dt]` assembled from `substeps` finer
/// increments; the same Brownian path is seen at step `dt` with `substeps`
/// fine draws and at step `dt/substeps` with one.
pub fn sample_coarse_increment(
    basis: &NoiseBasis,
    grid: &Grid,
    dt: f64,
    key: StreamKey,
    step: u64,
    substeps: u64,
) -> Increment {
    let fine = dt / substeps as f64;
    let mut total = sample_increment(basis, grid, fine, key, step * substeps);
    for i in 1..substeps {
        total.add_assign(&sample_increment(basis, grid, fine, key, step * substeps + i));
    }
    total
}

/// `ℬ(X) ΔW`: the diffusion coefficient at the state times the increment.
pub fn apply_diffusion(model: &NoiseModel, state: &StatePair, inc: &Increment) -> StatePair {
    let (kind, s0) = (model.kind, model.sigma0);
    StatePair {
        x: state
            .x
            .iter()
            .zip(&inc.bulk)
            .map(|(&x, w)| kind.coefficient(s0, x) * w)
            .collect(),
        y: state
            .y
            .iter()
            .zip(&inc.boundary)
            .map(|(&y, w)| kind.coefficient(s0, y) * w)
            .collect(),
    }
}

/// `‖ℬ(X)‖²` in the Hilbert–Schmidt norm from the mode space into `ℋ`.
pub fn hilbert_schmidt_sq(model: &NoiseModel, basis: &NoiseBasis, grid: &Grid, state: &StatePair) -> f64 {
    let (kind, s0) = (model.kind, model.sigma0);
    let cb: Vec<f64> = state.x.iter().map(|&x| kind.coefficient(s0, x).powi(2)).collect();
    let cg: Vec<f64> = state.y.iter().map(|&y| kind.coefficient(s0, y).powi(2)).collect();
    let bulk: f64 = basis
        .bulk
        .iter()
        .map(|e| {
            grid.mass_bulk()
                .iter()
                .zip(e)
                .zip(&cb)
                .map(|((m, v), c)| m * c * v * v)
                .sum::<f64>()
        })
        .sum();
    let bnd: f64 = basis
        .boundary
        .iter()
        .map(|e| {
            grid.mass_boundary()
                .iter()
                .zip(e)
                .zip(&cg)
                .map(|((m, v), c)| m * c * v * v)
                .sum::<f64>()
        })
        .sum();
    bulk + bnd
}
