//! Spatial discretization of the bulk domain and its boundary.
//!
//! The bulk domain is a strip, periodic in `x` with walls at `y = 0` and
//! `y = Ly`. The boundary is the pair of walls, each a discrete circle of
//! `nx` nodes. Nodes are stored row-major: node `(i, j)` lives at flat index
//! `j * nx + i`. Boundary node `k < nx` is `(k, 0)`, boundary node `nx + k` is
//! `(k, ny - 1)`.
//!
//! An interval mode (one column, `Lx = 1`) gives a 1-D domain whose boundary
//! is two points carrying unit counting measure.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Strip,
    Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    mode: GridMode,
    hx: f64,
    hy: f64,
    mass_bulk: Vec<f64>,
    mass_boundary: Vec<f64>,
    boundary_nodes: Vec<usize>,
}

impl Grid {
    pub fn strip(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 {
            return Err(Error::Config(format!("grid.nx must be >= 4, got {nx}")));
        }
        Self::build(nx, ny, lx, ly, GridMode::Strip)
    }

    pub fn interval(ny: usize, ly: f64) -> Result<Self> {
        Self::build(1, ny, 1.0, ly, GridMode::Interval)
    }

    fn build(nx: usize, ny: usize, lx: f64, ly: f64, mode: GridMode) -> Result<Self> {
        if ny < 3 {
            return Err(Error::Config(format!("grid.ny must be >= 3, got {ny}")));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::Config(format!(
                "grid lengths must be positive and finite, got Lx = {lx}, Ly = {ly}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / (ny - 1) as f64;
        let mut mass_bulk = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let w = if j == 0 || j == ny - 1 {
                0.5 * hx * hy
            } else {
                hx * hy
            };
            mass_bulk.extend(std::iter::repeat_n(w, nx));
        }
        let boundary_nodes = (0..nx).chain((0..nx).map(|i| (ny - 1) * nx + i)).collect();
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            mode,
            hx,
            hy,
            mass_bulk,
            mass_boundary: vec![hx; 2 * nx],
            boundary_nodes,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn n_bulk(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_boundary(&self) -> usize {
        2 * self.nx
    }

    #[inline]
    pub fn bulk_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Flat bulk index of boundary node `k`.
    #[inline]
    pub fn boundary_node(&self, k: usize) -> usize {
        self.boundary_nodes[k]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn mass_bulk(&self) -> &[f64] {
        &self.mass_bulk
    }

    pub fn mass_boundary(&self) -> &[f64] {
        &self.mass_boundary
    }

    /// Node coordinates `(x, y)` of flat index `n`.
    pub fn coords(&self, n: usize) -> (f64, f64) {
        let (i, j) = (n % self.nx, n / self.nx);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    /// Position along the boundary circle of boundary node `k`.
    pub fn boundary_coord(&self, k: usize) -> f64 {
        (k % self.nx) as f64 * self.hx
    }

    pub fn is_boundary_row(&self, j: usize) -> bool {
        j == 0 || j == self.ny - 1
    }

    /// Restriction of a bulk field to the boundary nodes.
    pub fn trace(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("trace input", self.n_bulk(), x.len())?;
        Ok(self.boundary_nodes.iter().map(|&n| x[n]).collect())
    }

    /// Mass-weighted L² norm over the bulk.
    pub fn norm_bulk(&self, x: &[f64]) -> f64 {
        weighted_sq(&self.mass_bulk, x).sqrt()
    }

    /// Mass-weighted L² norm over the boundary.
    pub fn norm_boundary(&self, y: &[f64]) -> f64 {
        weighted_sq(&self.mass_boundary, y).sqrt()
    }

    /// `∫_D |∇x|²` with forward differences, periodic in x.
    ///
    /// Each x-edge is weighted by the row's share of the trapezoid rule, each
    /// y-edge by a full cell, so the value equals `xᵀ K_D x` for the bulk
    /// stiffness matrix assembled by the operator module.
    pub fn grad_sq_bulk(&self, x: &[f64]) -> f64 {
        let (nx, ny, hx, hy) = (self.nx, self.ny, self.hx, self.hy);
        let mut acc = 0.0;
        if nx > 1 {
            for j in 0..ny {
                let w = if self.is_boundary_row(j) { 0.5 * hy } else { hy } / hx;
                let row = &x[j * nx..(j + 1) * nx];
                for i in 0..nx {
                    let d = row[(i + 1) % nx] - row[i];
                    acc += w * d * d;
                }
            }
        }
        let w = hx / hy;
        for j in 0..ny - 1 {
            for i in 0..nx {
                let d = x[(j + 1) * nx + i] - x[j * nx + i];
                acc += w * d * d;
            }
        }
        acc
    }

    /// `∫_Γ |∇_Γ y|²`, periodic forward differences along each boundary circle.
    pub fn grad_sq_boundary(&self, y: &[f64]) -> f64 {
        let nx = self.nx;
        if nx == 1 {
            return 0.0;
        }
        let mut acc = 0.0;
        for circle in y.chunks_exact(nx) {
            for i in 0..nx {
                let d = circle[(i + 1) % nx] - circle[i];
                acc += d * d;
            }
        }
        acc / self.hx
    }

    pub fn norms(&self, s: &StatePair) -> Result<Norms> {
        s.check_shape(self)?;
        Ok(Norms {
            h: self.norm_bulk(&s.x),
            h_gamma: self.norm_boundary(&s.y),
            grad_h: self.grad_sq_bulk(&s.x).sqrt(),
            grad_gamma: self.grad_sq_boundary(&s.y).sqrt(),
        })
    }

    /// Norm of the product space `H × H_Γ`.
    pub fn norm_hcal(&self, s: &StatePair) -> f64 {
        (weighted_sq(&self.mass_bulk, &s.x) + weighted_sq(&self.mass_boundary, &s.y)).sqrt()
    }

    /// Mass-weighted L¹ norm on the product space.
    pub fn norm_l1(&self, s: &StatePair) -> f64 {
        let bulk: f64 = self.mass_bulk.iter().zip(&s.x).map(|(m, v)| m * v.abs()).sum();
        let bnd: f64 = self.mass_boundary.iter().zip(&s.y).map(|(m, v)| m * v.abs()).sum();
        bulk + bnd
    }

    /// Sup norm over bulk and boundary values.
    pub fn norm_linf(s: &StatePair) -> f64 {
        s.x.iter().chain(&s.y).fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// `⟨a, b⟩_ℋ`.
    pub fn inner_hcal(&self, a: &StatePair, b: &StatePair) -> f64 {
        let bulk: f64 = self
            .mass_bulk
            .iter()
            .zip(a.x.iter().zip(&b.x))
            .map(|(m, (u, v))| m * u * v)
            .sum();
        let bnd: f64 = self
            .mass_boundary
            .iter()
            .zip(a.y.iter().zip(&b.y))
            .map(|(m, (u, v))| m * u * v)
            .sum();
        bulk + bnd
    }

    /// Discrete `L²(0,T)` integration weights are uniform; this is the
    /// squared 𝒱_ε norm of a trace-compatible pair.
    pub fn norm_v_sq(&self, s: &StatePair, eps: f64) -> f64 {
        let h = self.norm_hcal(s);
        h * h + self.grad_sq_bulk(&s.x) + eps * self.grad_sq_boundary(&s.y)
    }
}

pub(crate) fn weighted_sq(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(m, a)| m * a * a).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub h: f64,
    pub h_gamma: f64,
    pub grad_h: f64,
    pub grad_gamma: f64,
}

/// An element of `ℋ = H × H_Γ`: a bulk field and a boundary field.
///
/// States produced by the solver and the resolvent are trace compatible
/// (`y` is bitwise the restriction of `x`); right-hand sides need not be.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl StatePair {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            x: vec![0.0; grid.n_bulk()],
            y: vec![0.0; grid.n_boundary()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            x: vec![c; grid.n_bulk()],
            y: vec![c; grid.n_boundary()],
        }
    }

    /// Trace-compatible pair `(x, τx)`.
    pub fn from_bulk(grid: &Grid, x: Vec<f64>) -> Result<Self> {
        let y = grid.trace(&x)?;
        Ok(Self { x, y })
    }

    pub fn new(grid: &Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let s = Self { x, y };
        s.check_shape(grid)?;
        Ok(s)
    }

    pub fn check_shape(&self, grid: &Grid) -> Result<()> {
        check_len("bulk field", grid.n_bulk(), self.x.len())?;
        check_len("boundary field", grid.n_boundary(), self.y.len())
    }

    pub fn is_trace_compatible(&self, grid: &Grid) -> bool {
        self.x.len() == grid.n_bulk()
            && self.y.len() == grid.n_boundary()
            && grid
                .boundary_nodes()
                .iter()
                .zip(&self.y)
                .all(|(&n, &v)| self.x[n].to_bits() == v.to_bits())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| a * v).collect(),
            y: self.y.iter().map(|v| a * v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            x: self.x.iter().map(|&v| f(v)).collect(),
            y: self.y.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn masses_sum_to_measures() {
        for (nx, ny, lx, ly) in [(4, 3, 1.0, 1.0), (32, 17, 2.5, 0.75), (64, 33, 1.0, 1.0)] {
            let g = Grid::strip(nx, ny, lx, ly).unwrap();
            let area: f64 = g.mass_bulk().iter().sum();
            let perim: f64 = g.mass_boundary().iter().sum();
            assert!((area - lx * ly).abs() <= 1e-12 * lx * ly);
            assert!((perim - 2.0 * lx).abs() <= 1e-12 * 2.0 * lx);
        }
        let g = Grid::interval(5, 2.0).unwrap();
        assert!((g.mass_bulk().iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert_eq!(g.mass_boundary(), &[1.0, 1.0]);
    }

    #[test]
    fn boundary_index_is_injective() {
        let g = Grid::strip(8, 5, 1.0, 1.0).unwrap();
        let mut seen = g.boundary_nodes().to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), g.n_boundary());
        assert!(seen.iter().all(|&n| n < g.n_bulk()));
        for k in 0..g.n_boundary() {
            let (_, j) = (g.boundary_node(k) % 8, g.boundary_node(k) / 8);
            assert!(g.is_boundary_row(j));
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::strip(3, 5, 1.0, 1.0).is_err());
        assert!(Grid::strip(4, 2, 1.0, 1.0).is_err());
        assert!(Grid::strip(4, 3, 0.0, 1.0).is_err());
        assert!(Grid::interval(2, 1.0).is_err());
    }

    #[test]
    fn trace_examples() {
        let g = Grid::strip(4, 3, 1.0, 1.0).unwrap();
        assert_eq!(g.trace(&[2.5; 12]).unwrap(), vec![2.5; 8]);
        assert_eq!(g.trace(&[0.0; 12]).unwrap(), vec![0.0; 8]);
        let x: Vec<f64> = (0..12).map(|n| g.coords(n).1).collect();
        let y = g.trace(&x).unwrap();
        assert_eq!(&y[..4], &[0.0; 4]);
        assert_eq!(&y[4..], &[1.0; 4]);
        assert!(matches!(g.trace(&[0.0; 5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn norms_of_zero_and_constants() {
        let g = Grid::strip(16, 9, 1.0, 1.0).unwrap();
        let n = g.norms(&StatePair::zeros(&g)).unwrap();
        assert_eq!((n.h, n.h_gamma, n.grad_h, n.grad_gamma), (0.0, 0.0, 0.0, 0.0));
        let n = g.norms(&StatePair::constant(&g, 3.0)).unwrap();
        assert!((n.h - 3.0).abs() < 1e-13);
        assert!((n.h_gamma - 3.0 * 2f64.sqrt()).abs() < 1e-13);
        assert_eq!(n.grad_h, 0.0);
        assert_eq!(n.grad_gamma, 0.0);
    }

    #[test]
    fn norm_h_has_no_hidden_normalization() {
        let g = Grid::strip(6, 4, 1.3, 0.7).unwrap();
        let x: Vec<f64> = (0..24).map(|n| (n as f64 * 0.37).sin()).collect();
        let direct: f64 = g.mass_bulk().iter().zip(&x).map(|(m, v)| m * v * v).sum();
        let s = StatePair::from_bulk(&g, x).unwrap();
        assert!((g.norms(&s).unwrap().h.powi(2) - direct).abs() <= 1e-15 * direct);
    }

    #[test]
    fn sin_mode_gradient_norm() {
        // Dense difference oracle: each x-difference of sin(2πi/n) is
        // 2 sin(π/n) cos(2π(i+1/2)/n); summing the squares over a period
        // gives n·2 sin²(π/n), so ∫|∂x u|² = Lx·Ly·(2 sin(π/n)/hx)²/2.
        let (nx, ny) = (64, 33);
        let g = Grid::strip(nx, ny, 1.0, 1.0).unwrap();
        let x: Vec<f64> = (0..nx * ny)
            .map(|n| (2.0 * PI * (n % nx) as f64 / nx as f64).sin())
            .collect();
        let s = StatePair::from_bulk(&g, x).unwrap();
        let got = g.norms(&s).unwrap().grad_h;
        let oracle = (2.0 * (PI / nx as f64).sin() / g.hx()) / 2f64.sqrt();
        assert!((got - oracle).abs() < 1e-12);
        let analytic = 2.0 * PI / 2f64.sqrt();
        assert!((got - analytic).abs() < 2.0 * (2.0 * PI / nx as f64).powi(2) * analytic);
    }

    #[test]
    fn interval_mode_has_no_tangential_gradient() {
        let g = Grid::interval(6, 1.0).unwrap();
        let x: Vec<f64> = (0..6).map(|j| j as f64 * g.hy()).collect();
        let s = StatePair::from_bulk(&g, x).unwrap();
        let n = g.norms(&s).unwrap();
        assert!((n.grad_h - 1.0).abs() < 1e-14);
        assert_eq!(n.grad_gamma, 0.0);
        assert_eq!(s.y, vec![0.0, 1.0]);
    }

    #[test]
    fn trace_compatibility_is_bitwise() {
        let g = Grid::strip(4, 3, 1.0, 1.0).unwrap();
        let mut s = StatePair::from_bulk(&g, (0..12).map(|v| v as f64 * 0.1).collect()).unwrap();
        assert!(s.is_trace_compatible(&g));
        s.y[3] += 1e-16 * s.y[3].abs().max(1.0);
        assert!(!s.is_trace_compatible(&g));
    }
}
