//! The coupled bulk–surface operator `𝒞_ε(u, v) = (−Δu, ∂ₙu − εΔ_Γ v)`.
//!
//! Everything is assembled from the bilinear form
//! `∫_D ∇u·∇φ + ε ∫_Γ ∇_Γ v·∇_Γ ψ` on trace-compatible fields, so the unknown
//! is a single bulk vector whose boundary entries double as the surface
//! field. The normal derivative never appears: it is what the boundary rows
//! of the bulk stiffness produce once the mass of those rows includes the
//! surface weight.

mod linalg;
pub mod suite;
pub mod verify;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub use linalg::{pcg, BandCholesky, CsrMatrix, IterStats};

use crate::error::{check_len, Error, Result};
use crate::geometry::{Grid, GridMode, StatePair};

/// Relative residual required of every linear solve.
pub const SOLVE_TOL: f64 = 1e-10;
/// Largest system handled by direct band factorization (a 64×33 strip).
pub const DIRECT_LIMIT: usize = 64 * 33;
const PCG_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Direct,
    Cg,
}

#[derive(Debug)]
pub struct BulkSurfaceOperator {
    grid: Grid,
    eps: f64,
    stiffness: CsrMatrix,
    mass: Vec<f64>,
    backend: Backend,
    factors: Mutex<HashMap<u64, Arc<BandCholesky>>>,
}

impl Clone for BulkSurfaceOperator {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            eps: self.eps,
            stiffness: self.stiffness.clone(),
            mass: self.mass.clone(),
            backend: self.backend,
            factors: Mutex::new(HashMap::new()),
        }
    }
}

impl BulkSurfaceOperator {
    pub fn assemble(grid: &Grid, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Config(format!("solver.eps must be >= 0, got {eps}")));
        }
        if grid.mode() == GridMode::Interval && eps > 0.0 {
            return Err(Error::Config(format!(
                "solver.eps = {eps} is not allowed with grid.mode = interval (the boundary is two points)"
            )));
        }
        let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
        let mut t = Vec::with_capacity(4 * 3 * nx * ny);
        let mut edge = |a: usize, b: usize, c: f64| {
            t.extend([(a, a, c), (b, b, c), (a, b, -c), (b, a, -c)]);
        };
        if nx > 1 {
            for j in 0..ny {
                let w = if grid.is_boundary_row(j) { 0.5 * hy } else { hy } / hx;
                for i in 0..nx {
                    edge(grid.bulk_index(i, j), grid.bulk_index((i + 1) % nx, j), w);
                }
            }
            if eps > 0.0 {
                for j in [0, ny - 1] {
                    for i in 0..nx {
                        edge(grid.bulk_index(i, j), grid.bulk_index((i + 1) % nx, j), eps / hx);
                    }
                }
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                edge(grid.bulk_index(i, j), grid.bulk_index(i, j + 1), hx / hy);
            }
        }
        let stiffness = CsrMatrix::from_triplets(grid.n_bulk(), t);
        let mut mass = grid.mass_bulk().to_vec();
        for (k, &n) in grid.boundary_nodes().iter().enumerate() {
            mass[n] += grid.mass_boundary()[k];
        }
        let backend = if grid.n_bulk() <= DIRECT_LIMIT {
            Backend::Direct
        } else {
            Backend::Cg
        };
        Ok(Self {
            grid: grid.clone(),
            eps,
            stiffness,
            mass,
            backend,
            factors: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Diagonal of the lumped mass matrix of `ℋ` on the coupled unknown.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `xᵀ K x`, the Dirichlet energy `∫|∇u|² + ε∫|∇_Γ v|²`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        linalg::dot(x, &self.stiffness.mul(x))
    }

    /// `M⁻¹ K x` for a trace-compatible pair.
    pub fn apply(&self, s: &StatePair) -> Result<StatePair> {
        s.check_shape(&self.grid)?;
        let kx = self.stiffness.mul(&s.x);
        let out = kx.iter().zip(&self.mass).map(|(v, m)| v / m).collect();
        StatePair::from_bulk(&self.grid, out)
    }

    /// Riesz load of an element of `ℋ`: `M_D f + τᵀ M_Γ g`.
    pub fn load(&self, rhs: &StatePair) -> Result<Vec<f64>> {
        rhs.check_shape(&self.grid)?;
        let mut b: Vec<f64> = self
            .grid
            .mass_bulk()
            .iter()
            .zip(&rhs.x)
            .map(|(m, v)| m * v)
            .collect();
        for (k, &n) in self.grid.boundary_nodes().iter().enumerate() {
            b[n] += self.grid.mass_boundary()[k] * rhs.y[k];
        }
        Ok(b)
    }

    fn cached_factor(&self, delta: f64) -> Result<Arc<BandCholesky>> {
        let key = delta.to_bits();
        if let Some(f) = self.factors.lock().unwrap().get(&key) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(BandCholesky::factor(&self.stiffness, delta, &self.mass)?);
        self.factors
            .lock()
            .unwrap()
            .insert(key, Arc::clone(&f));
        Ok(f)
    }

    fn residual(&self, diag: &[f64], delta: f64, z: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
        let mut r = self.stiffness.mul(z);
        for i in 0..r.len() {
            r[i] = b[i] - (diag[i] * z[i] + delta * r[i]);
        }
        let bn = linalg::dot(b, b).sqrt();
        let rel = if bn == 0.0 {
            linalg::dot(&r, &r).sqrt()
        } else {
            linalg::dot(&r, &r).sqrt() / bn
        };
        (r, rel)
    }

    /// Solves `(diag + δK) z = b`. With `cache`, direct factorizations are
    /// kept per δ (only valid when `diag` is the mass).
    fn solve_system(
        &self,
        diag: &[f64],
        delta: f64,
        b: &[f64],
        cache: bool,
        guess: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        check_len("linear system right-hand side", self.mass.len(), b.len())?;
        match self.backend {
            Backend::Direct => {
                let factor = if cache {
                    self.cached_factor(delta)?
                } else {
                    Arc::new(BandCholesky::factor(&self.stiffness, delta, diag)?)
                };
                let mut z = b.to_vec();
                factor.solve_in_place(&mut z);
                // one round of iterative refinement guards against loss of
                // accuracy on badly scaled diagonals
                for _ in 0..2 {
                    let (mut r, rel) = self.residual(diag, delta, &z, b);
                    if rel <= SOLVE_TOL * 1e-2 {
                        break;
                    }
                    factor.solve_in_place(&mut r);
                    for (zi, ri) in z.iter_mut().zip(&r) {
                        *zi += ri;
                    }
                }
                let (_, rel) = self.residual(diag, delta, &z, b);
                if rel > SOLVE_TOL {
                    return Err(Error::NoConvergence {
                        context: "direct band solve",
                        iterations: 2,
                        residual: rel,
                    });
                }
                Ok(z)
            }
            Backend::Cg => {
                let (z, _) = pcg(&self.stiffness, delta, diag, b, guess, SOLVE_TOL, PCG_MAX_ITER)?;
                Ok(z)
            }
        }
    }

    /// Solves `(diag + δK) z = b` for an arbitrary positive diagonal.
    pub fn solve_shifted(&self, diag: &[f64], delta: f64, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        check_len("shift diagonal", self.mass.len(), diag.len())?;
        self.solve_system(diag, delta, b, false, guess)
    }

    /// `(I + δ𝒞_ε)⁻ᵐ rhs` by `m` successive solves of `(M + δK)s = M·rhs`.
    /// The first solve takes the Riesz load of `rhs`, so right-hand sides
    /// need not be trace compatible; the result always is.
    pub fn resolvent(&self, delta: f64, rhs: &StatePair, m: usize) -> Result<StatePair> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!("resolvent δ must be positive, got {delta}")));
        }
        if m == 0 {
            return Err(Error::Config("resolvent power must be >= 1".into()));
        }
        let mut b = self.load(rhs)?;
        let mut z = Vec::new();
        for k in 0..m {
            z = self.solve_system(&self.mass, delta, &b, true, None)?;
            if k + 1 < m {
                b = z.iter().zip(&self.mass).map(|(v, w)| v * w).collect();
            }
        }
        StatePair::from_bulk(&self.grid, z)
    }

    /// `(I + δ𝒞_ε)⁻ᵐ` with `m = 0` meaning the identity on trace-compatible
    /// fields and the `ℋ`-orthogonal projection onto them otherwise.
    pub fn resolvent_power(&self, delta: f64, rhs: &StatePair, m: usize) -> Result<StatePair> {
        if m > 0 {
            return self.resolvent(delta, rhs, m);
        }
        if rhs.is_trace_compatible(&self.grid) {
            return Ok(rhs.clone());
        }
        let b = self.load(rhs)?;
        let z = b.iter().zip(&self.mass).map(|(v, w)| v / w).collect();
        StatePair::from_bulk(&self.grid, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn strip(nx: usize, ny: usize) -> Grid {
        Grid::strip(nx, ny, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        for eps in [0.0, 0.3] {
            let g = strip(8, 5);
            let op = BulkSurfaceOperator::assemble(&g, eps).unwrap();
            let out = op.apply(&StatePair::constant(&g, 2.0)).unwrap();
            assert!(out.x.iter().all(|v| v.abs() < 1e-12));
            assert!(op.stiffness().is_symmetric(1e-15));
            assert!(op.mass().iter().all(|&m| m > 0.0));
        }
    }

    #[test]
    fn stiffness_matches_discrete_gradient_norms() {
        let g = strip(10, 6);
        let op = BulkSurfaceOperator::assemble(&g, 0.4).unwrap();
        let x: Vec<f64> = (0..60).map(|n| ((n * n) as f64 * 0.013).cos()).collect();
        let s = StatePair::from_bulk(&g, x.clone()).unwrap();
        let form = g.grad_sq_bulk(&s.x) + 0.4 * g.grad_sq_boundary(&s.y);
        assert!((op.energy(&x) - form).abs() < 1e-12 * form);
    }

    #[test]
    fn eps_zero_has_no_tangential_block() {
        let g = strip(8, 5);
        let k0 = BulkSurfaceOperator::assemble(&g, 0.0).unwrap();
        let k1 = BulkSurfaceOperator::assemble(&g, 1.0).unwrap();
        // a boundary-row neighbour couples through hy/(2hx) only when ε = 0
        let (a, b) = (g.bulk_index(0, 0), g.bulk_index(1, 0));
        let w = 0.5 * g.hy() / g.hx();
        assert!((k0.stiffness().get(a, b) + w).abs() < 1e-14);
        assert!((k1.stiffness().get(a, b) + w + 1.0 / g.hx()).abs() < 1e-12);
    }

    #[test]
    fn interval_mode_rejects_positive_eps() {
        let g = Grid::interval(5, 1.0).unwrap();
        assert!(BulkSurfaceOperator::assemble(&g, 0.1).is_err());
        assert!(BulkSurfaceOperator::assemble(&g, 0.0).is_ok());
    }

    #[test]
    fn sin_mode_interior_eigenvalue() {
        // dense finite-difference oracle for the periodic second difference
        let (nx, ny) = (32, 9);
        let g = strip(nx, ny);
        let op = BulkSurfaceOperator::assemble(&g, 0.0).unwrap();
        let x: Vec<f64> = (0..nx * ny).map(|n| (2.0 * PI * (n % nx) as f64 / nx as f64).sin()).collect();
        let out = op.apply(&StatePair::from_bulk(&g, x.clone()).unwrap()).unwrap();
        let discrete = (2.0 * (PI / nx as f64).sin() / g.hx()).powi(2);
        let exact = (2.0 * PI).powi(2);
        for j in 1..ny - 1 {
            for i in 0..nx {
                let n = g.bulk_index(i, j);
                assert!((out.x[n] - discrete * x[n]).abs() < 1e-9);
                assert!((out.x[n] - exact * x[n]).abs() <= 2.0 * (2.0 * PI / nx as f64).powi(2) * exact);
            }
        }
    }

    #[test]
    fn quadratic_form_is_nonnegative() {
        let g = strip(12, 7);
        let op = BulkSurfaceOperator::assemble(&g, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..g.n_bulk()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(op.energy(&x) >= 0.0);
        }
    }

    #[test]
    fn resolvent_fixes_constants_and_zero() {
        let g = strip(8, 5);
        let op = BulkSurfaceOperator::assemble(&g, 0.2).unwrap();
        for delta in [0.01, 1.0, 30.0] {
            for m in [1, 3] {
                let c = op.resolvent(delta, &StatePair::constant(&g, -1.5), m).unwrap();
                assert!(c.x.iter().all(|v| (v + 1.5).abs() < 1e-12));
                let z = op.resolvent(delta, &StatePair::zeros(&g), m).unwrap();
                assert!(z.x.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn tiny_interval_resolvent_matches_dense_solve() {
        // ny = 3 on [0, 1]: h = 1/2, bulk masses (1/4, 1/2, 1/4), boundary
        // points weigh 1, stiffness of a 3-node chain with edge weight 2.
        let g = Grid::interval(3, 1.0).unwrap();
        let op = BulkSurfaceOperator::assemble(&g, 0.0).unwrap();
        let mut rhs = StatePair::zeros(&g);
        rhs.x[1] = 1.0;
        let out = op.resolvent(1.0, &rhs, 1).unwrap();
        // (M + K) z = (0, 1/2, 0) with M = diag(5/4, 1/2, 5/4)
        let a = [[1.25 + 2.0, -2.0, 0.0], [-2.0, 0.5 + 4.0, -2.0], [0.0, -2.0, 1.25 + 2.0]];
        let b = [0.0, 0.5, 0.0];
        // Cramer's rule
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(a);
        for col in 0..3 {
            let mut m = a;
            for row in 0..3 {
                m[row][col] = b[row];
            }
            assert!((out.x[col] - det3(m) / d).abs() < 1e-14);
        }
        assert_eq!(out.y, vec![out.x[0], out.x[2]]);
    }

    #[test]
    fn cg_and_direct_backends_agree() {
        let g = strip(16, 9);
        let direct = BulkSurfaceOperator::assemble(&g, 0.1).unwrap();
        let cg = direct.clone().with_backend(Backend::Cg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rhs = StatePair::new(
            &g,
            (0..g.n_bulk()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..g.n_boundary()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let a = direct.resolvent(0.3, &rhs, 2).unwrap();
        let b = cg.resolvent(0.3, &rhs, 2).unwrap();
        for (u, v) in a.x.iter().zip(&b.x) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn resolvent_inverts_identity_plus_operator() {
        let g = strip(12, 7);
        let op = BulkSurfaceOperator::assemble(&g, 0.25).unwrap();
        let x: Vec<f64> = (0..g.n_bulk()).map(|n| ((n as f64) * 0.7).sin()).collect();
        let s = StatePair::from_bulk(&g, x).unwrap();
        let cs = op.apply(&s).unwrap();
        let delta = 0.05;
        let image = StatePair::from_bulk(&g, s.x.iter().zip(&cs.x).map(|(a, b)| a + delta * b).collect()).unwrap();
        let back = op.resolvent(delta, &image, 1).unwrap();
        for (u, v) in back.x.iter().zip(&s.x) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
