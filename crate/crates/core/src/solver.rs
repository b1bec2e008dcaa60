//! Compressed sparse rows and a Jacobi-preconditioned BiCGSTAB solver.
//!
//! Reductions use a fixed chunking so that results are bit-identical for any
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

const PAR_THRESHOLD: usize = 1 << 15;
const CHUNK: usize = 1 << 12;

/// Row-major sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n_rows: row_ptr.len() - 1,
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, r)).collect()
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            s += self.vals[k] * x[self.cols[k]];
        }
        s
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        if self.n_rows >= PAR_THRESHOLD {
            y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
                let base = c * CHUNK;
                for (k, yk) in ys.iter_mut().enumerate() {
                    *yk = self.row_dot(base + k, x);
                }
            });
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.row_dot(r, x);
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0f64; self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                let k = next[c];
                cols[k] = r;
                vals[k] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|e| e.1.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `α·self + β·I` (square matrices only).
    pub fn shifted(&self, alpha: f64, beta: f64) -> CsrMatrix {
        let rows = (0..self.n_rows)
            .map(|r| {
                let mut row: Vec<(usize, f64)> = self.row(r).map(|(c, v)| (c, alpha * v)).collect();
                row.push((r, beta));
                row
            })
            .collect();
        CsrMatrix::from_rows(self.n_cols, rows)
    }

    /// Submatrix on the given rows and columns (index lists into the original).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let out = rows
            .iter()
            .map(|&r| {
                self.row(r)
                    .filter(|e| map[e.0] != usize::MAX)
                    .map(|(c, v)| (map[c], v))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(cols.len(), out)
    }
}

/// Deterministic dot product (fixed chunk order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_THRESHOLD {
        let partial: Vec<f64> = a
            .par_chunks(CHUNK)
            .zip(b.par_chunks(CHUNK))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        partial.iter().sum()
    } else {
        a.iter().zip(b).map(|(p, q)| p * q).sum()
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    a.matvec(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(r)
}

/// Solves `A x = b` with right Jacobi-preconditioned BiCGSTAB.
///
/// Converged means `‖b − A x‖₂ ≤ rtol·‖b‖₂` for the returned `x`.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: SolveOptions) -> Result<SolveReport> {
    let n = a.n_rows;
    assert_eq!(a.n_cols, n, "bicgstab needs a square matrix");
    assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    if bnorm == 0.0 {
        return Ok(SolveReport {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    let mut rnorm = true_residual(a, &x, b, &mut r);
    let mut iterations = 0;
    let mut restarts = 0;
    'outer: while rnorm > opts.rtol * bnorm && iterations < opts.max_iter {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        while iterations < opts.max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = p[i] * inv_diag[i];
            }
            a.matvec(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
                x[i] += alpha * y[i];
            }
            let snorm = norm2(&s);
            if snorm <= opts.rtol * bnorm {
                rnorm = true_residual(a, &x, b, &mut r);
                if rnorm <= opts.rtol * bnorm {
                    break 'outer;
                }
                break;
            }
            for i in 0..n {
                z[i] = s[i] * inv_diag[i];
            }
            a.matvec(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            rnorm = norm2(&r);
            if rnorm <= opts.rtol * bnorm {
                rnorm = true_residual(a, &x, b, &mut r);
                if rnorm <= opts.rtol * bnorm {
                    break 'outer;
                }
                break;
            }
        }
        // Breakdown or drift of the recursive residual: restart from the true residual.
        rnorm = true_residual(a, &x, b, &mut r);
        restarts += 1;
        if restarts > 50 {
            break;
        }
    }
    let rel = rnorm / bnorm;
    if rel <= opts.rtol {
        Ok(SolveReport {
            x,
            iterations,
            relative_residual: rel,
        })
    } else {
        Err(Error::NonConvergence {
            iterations,
            residual: rel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0 + shift)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = laplacian_1d(200, 0.0);
        let exact: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.mul(&exact);
        let rep = bicgstab(&a, &b, None, SolveOptions::default()).unwrap();
        assert!(rep.relative_residual <= 1e-10);
        let err = rep.x.iter().zip(&exact).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "err = {err}");
    }

    #[test]
    fn nonsymmetric_m_matrix() {
        let n = 100;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 3.0)];
                if i > 0 {
                    r.push((i - 1, -2.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -0.5));
                }
                r
            })
            .collect();
        let a = CsrMatrix::from_rows(n, rows);
        let b = vec![1.0; n];
        let rep = bicgstab(&a, &b, None, SolveOptions::default()).unwrap();
        let r = a.mul(&rep.x);
        let res = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * (n as f64).sqrt());
        assert!(rep.x.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let a = laplacian_1d(400, 0.0);
        let b = vec![1.0; 400];
        let err = bicgstab(&a, &b, None, SolveOptions { rtol: 1e-14, max_iter: 3 }).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations, .. } if iterations <= 3 + 1));
    }

    #[test]
    fn transpose_and_restrict() {
        let a = CsrMatrix::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![(1, 3.0)], vec![(0, 4.0), (0, 1.0)]]);
        let t = a.transpose();
        assert_eq!(t.get(2, 0), 2.0);
        assert_eq!(t.get(0, 2), 5.0);
        let sub = a.restrict(&[0, 2], &[0, 2]);
        assert_eq!(sub.get(0, 1), 2.0);
        assert_eq!(sub.get(1, 0), 5.0);
        assert_eq!(a.norm_inf(), 5.0);
    }
}
