//! Small symmetric matrices in dimension one or two.

use serde::{Deserialize, Serialize};

/// A symmetric `d × d` matrix with `d ∈ {1, 2}`.
///
/// In dimension one only `a11` is meaningful; `a12` and `a22` are kept at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    pub dim: usize,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMat {
    pub fn new2(a11: f64, a12: f64, a22: f64) -> Self {
        Self {
            dim: 2,
            a11,
            a12,
            a22,
        }
    }

    pub fn new1(a: f64) -> Self {
        Self {
            dim: 1,
            a11: a,
            a12: 0.0,
            a22: 0.0,
        }
    }

    pub fn scalar(dim: usize, s: f64) -> Self {
        match dim {
            1 => Self::new1(s),
            _ => Self::new2(s, 0.0, s),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn zero(dim: usize) -> Self {
        Self::scalar(dim, 0.0)
    }

    pub fn diag(dim: usize, d1: f64, d2: f64) -> Self {
        match dim {
            1 => Self::new1(d1),
            _ => Self::new2(d1, 0.0, d2),
        }
    }

    /// `½(e_i ⊗ e_j + e_j ⊗ e_i)` with zero-based indices.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zero(dim);
        m.set(i, j, if i == j { 1.0 } else { 0.5 });
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a11,
            (1, 1) => self.a22,
            _ => self.a12,
        }
    }

    /// Sets entry `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        match (i, j) {
            (0, 0) => self.a11 = v,
            (1, 1) => self.a22 = v,
            _ => self.a12 = v,
        }
    }

    pub fn trace(&self) -> f64 {
        match self.dim {
            1 => self.a11,
            _ => self.a11 + self.a22,
        }
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.a11,
            _ => self.a11 * self.a22 - self.a12 * self.a12,
        }
    }

    /// `tr(self · m)` for symmetric `m`.
    pub fn contract(&self, m: &SymMat) -> f64 {
        match self.dim {
            1 => self.a11 * m.a11,
            _ => self.a11 * m.a11 + 2.0 * self.a12 * m.a12 + self.a22 * m.a22,
        }
    }

    /// `xᵀ self x`.
    pub fn quad(&self, x: [f64; 2]) -> f64 {
        match self.dim {
            1 => self.a11 * x[0] * x[0],
            _ => self.a11 * x[0] * x[0] + 2.0 * self.a12 * x[0] * x[1] + self.a22 * x[1] * x[1],
        }
    }

    /// Eigenvalues in ascending order (the second equals the first when `d = 1`).
    pub fn eigenvalues(&self) -> (f64, f64) {
        match self.dim {
            1 => (self.a11, self.a11),
            _ => {
                let mean = 0.5 * (self.a11 + self.a22);
                let r = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
                (mean - r, mean + r)
            }
        }
    }

    pub fn frobenius(&self) -> f64 {
        match self.dim {
            1 => self.a11.abs(),
            _ => (self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22).sqrt(),
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }

    pub fn add(&self, o: &SymMat) -> SymMat {
        SymMat {
            dim: self.dim,
            a11: self.a11 + o.a11,
            a12: self.a12 + o.a12,
            a22: self.a22 + o.a22,
        }
    }

    pub fn sub(&self, o: &SymMat) -> SymMat {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat {
            dim: self.dim,
            a11: s * self.a11,
            a12: s * self.a12,
            a22: s * self.a22,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite()
    }

    pub fn is_spd(&self) -> bool {
        self.is_finite() && self.eigenvalues().0 > 0.0
    }

    pub fn inverse(&self) -> Option<SymMat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(match self.dim {
            1 => SymMat::new1(1.0 / self.a11),
            _ => SymMat::new2(self.a22 / det, -self.a12 / det, self.a11 / det),
        })
    }

    /// Principal square root of a symmetric positive definite matrix.
    ///
    /// Uses the 2×2 identity `√S = (S + √det S · I) / √(tr S + 2√det S)`.
    pub fn sqrt_spd(&self) -> Option<SymMat> {
        if !self.is_spd() {
            return None;
        }
        Some(match self.dim {
            1 => SymMat::new1(self.a11.sqrt()),
            _ => {
                let s = self.det().sqrt();
                let t = (self.trace() + 2.0 * s).sqrt();
                SymMat::new2((self.a11 + s) / t, self.a12 / t, (self.a22 + s) / t)
            }
        })
    }

    /// Matrix product of two symmetric matrices (not symmetric in general).
    pub fn mul(&self, o: &SymMat) -> [[f64; 2]; 2] {
        [
            [
                self.a11 * o.a11 + self.a12 * o.a12,
                self.a11 * o.a12 + self.a12 * o.a22,
            ],
            [
                self.a12 * o.a11 + self.a22 * o.a12,
                self.a12 * o.a12 + self.a22 * o.a22,
            ],
        ]
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        match self.dim {
            1 => [self.a11 * x[0], 0.0],
            _ => [
                self.a11 * x[0] + self.a12 * x[1],
                self.a12 * x[0] + self.a22 * x[1],
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let s = SymMat::new2(4.0, 0.0, 1.0).sqrt_spd().unwrap();
        assert!((s.a11 - 2.0).abs() < 1e-15 && s.a12 == 0.0 && (s.a22 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = SymMat::new2(1.7, -0.4, 1.1);
        let s = a.sqrt_spd().unwrap();
        let p = s.mul(&s);
        assert!((p[0][0] - a.a11).abs() < 1e-14);
        assert!((p[0][1] - a.a12).abs() < 1e-14);
        assert!((p[1][0] - a.a12).abs() < 1e-14);
        assert!((p[1][1] - a.a22).abs() < 1e-14);
    }

    #[test]
    fn eigen_and_inverse() {
        let a = SymMat::new2(2.0, 1.0, 2.0);
        let (l, u) = a.eigenvalues();
        assert!((l - 1.0).abs() < 1e-15 && (u - 3.0).abs() < 1e-15);
        let inv = a.inverse().unwrap();
        let p = a.mul(&inv);
        assert!((p[0][0] - 1.0).abs() < 1e-15 && p[0][1].abs() < 1e-15);
        assert!(SymMat::new2(1.0, 2.0, 1.0).sqrt_spd().is_none());
    }
}
