//! Sparse and banded kernels for the symmetric positive definite systems
//! `(D + δK) z = b` arising from the resolvent and from Newton steps.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0)))
    }
}

/// Cholesky factor of a symmetric positive definite band matrix.
///
/// Row `i` stores `L[i][i-bw ..= i]` at offsets `0 ..= bw`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factors `diag + delta·K` where `K` is given in CSR form.
    pub fn factor(k: &CsrMatrix, delta: f64, diag: &[f64]) -> Result<Self> {
        let n = k.n();
        let bw = k.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in k.row(i) {
                if j <= i {
                    l[i * w + (j + bw - i)] += delta * v;
                }
            }
            l[i * w + bw] += diag[i];
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = l[i * w + (j + bw - i)];
                let klo = lo.max(j.saturating_sub(bw));
                for kk in klo..j {
                    sum -= l[i * w + (kk + bw - i)] * l[j * w + (kk + bw - j)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NoConvergence {
                            context: "band Cholesky (matrix not positive definite)",
                            iterations: i,
                            residual: sum,
                        });
                    }
                    l[i * w + bw] = sum.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = sum / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut sum = b[i];
            for j in lo..i {
                sum -= self.l[i * w + (j + bw - i)] * b[j];
            }
            b[i] = sum / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut sum = b[i];
            for j in i + 1..=hi {
                sum -= self.l[j * w + (i + bw - j)] * b[j];
            }
            b[i] = sum / self.l[i * w + bw];
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct IterStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `(diag + δK) z = b`.
pub fn pcg(
    k: &CsrMatrix,
    delta: f64,
    diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let kd = k.diagonal();
    let precond: Vec<f64> = (0..n).map(|i| 1.0 / (diag[i] + delta * kd[i])).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        k.matvec(x, out);
        for i in 0..n {
            out[i] = diag[i] * x[i] + delta * out[i];
        }
    };
    let bnorm = dot(b, b).sqrt();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            IterStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return Ok((
                x,
                IterStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    if rel <= rel_tol {
        return Ok((
            x,
            IterStats {
                iterations: max_iter,
                relative_residual: rel,
            },
        ));
    }
    Err(Error::NoConvergence {
        context: "preconditioned conjugate gradients",
        iterations: max_iter,
        residual: rel,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
