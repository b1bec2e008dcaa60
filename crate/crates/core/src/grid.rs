//! Rectangular node grids: Dirichlet boxes and periodic tori.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform grid with spacing `h` in dimension one or two.
///
/// Nodes sit at `origin + (i, j)·h` with `0 ≤ i < n[0]`, `0 ≤ j < n[1]`
/// (`n[1] = 1` in dimension one). Node `(i, j)` has flat index `i + n[0]·j`.
/// On a box the outermost layer of nodes carries Dirichlet data; on a torus
/// every node is interior and the period is `n·h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub h: f64,
    pub n: [usize; 2],
    pub origin: [f64; 2],
    pub periodic: bool,
}

impl Grid {
    /// Torus of integer `period` (in lattice units) with `nodes_per_unit` nodes per unit length.
    pub fn torus(dim: usize, period: usize, nodes_per_unit: usize) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Parameter(format!("grid dimension {dim} not in {{1, 2}}")));
        }
        if period < 1 || nodes_per_unit < 1 {
            return Err(Error::Parameter("torus needs positive period and resolution".into()));
        }
        let n = period * nodes_per_unit;
        if n < 3 {
            return Err(Error::Parameter("torus needs at least three nodes per axis".into()));
        }
        Ok(Grid {
            dim,
            h: 1.0 / nodes_per_unit as f64,
            n: [n, if dim == 2 { n } else { 1 }],
            origin: [0.0; 2],
            periodic: true,
        })
    }

    /// Box with `n` nodes per axis starting at `origin`.
    pub fn boxed(dim: usize, origin: [f64; 2], h: f64, n: usize) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Parameter(format!("grid dimension {dim} not in {{1, 2}}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Parameter(format!("mesh size h = {h} must be positive")));
        }
        if n < 3 {
            return Err(Error::Parameter("box needs at least three nodes per axis".into()));
        }
        Ok(Grid {
            dim,
            h,
            n: [n, if dim == 2 { n } else { 1 }],
            origin: if dim == 2 { origin } else { [origin[0], 0.0] },
            periodic: false,
        })
    }

    /// Smallest box with a node at `center` and at least `half_width` of room on each side.
    pub fn centered_box(dim: usize, center: [f64; 2], half_width: f64, h: f64) -> Result<Grid> {
        let k = (half_width / h).ceil().max(1.0) as usize;
        let n = 2 * k + 1;
        let origin = [center[0] - k as f64 * h, center[1] - k as f64 * h];
        Grid::boxed(dim, origin, h, n)
    }

    /// Unit cube `[0,1]^d` with `cells` intervals per axis.
    pub fn unit_box(dim: usize, cells: usize) -> Result<Grid> {
        Grid::boxed(dim, [0.0; 2], 1.0 / cells as f64, cells + 1)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^d`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn period(&self) -> Option<[f64; 2]> {
        self.periodic
            .then(|| [self.n[0] as f64 * self.h, self.n[1] as f64 * self.h])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        [idx % self.n[0], idx / self.n[0]]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.coords(idx);
        [
            self.origin[0] + i as f64 * self.h,
            if self.dim == 2 {
                self.origin[1] + j as f64 * self.h
            } else {
                0.0
            },
        ]
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.periodic {
            return false;
        }
        let [i, j] = self.coords(idx);
        i == 0 || i + 1 == self.n[0] || (self.dim == 2 && (j == 0 || j + 1 == self.n[1]))
    }

    /// Neighbor at offset `(di, dj)`, wrapping on a torus; `None` off a box.
    #[inline]
    pub fn neighbor(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let [i, j] = self.coords(idx);
        let shift = |c: usize, d: isize, n: usize| -> Option<usize> {
            let v = c as isize + d;
            if self.periodic {
                Some(v.rem_euclid(n as isize) as usize)
            } else if v < 0 || v >= n as isize {
                None
            } else {
                Some(v as usize)
            }
        };
        let ni = shift(i, di, self.n[0])?;
        let nj = if self.dim == 2 { shift(j, dj, self.n[1])? } else { 0 };
        Some(self.index(ni, nj))
    }

    /// Node nearest to `x` (reduced modulo the period on a torus).
    pub fn nearest_node(&self, x: [f64; 2]) -> Result<usize> {
        let mut c = [0usize; 2];
        for k in 0..self.dim {
            let r = ((x[k] - self.origin[k]) / self.h).round();
            if self.periodic {
                c[k] = (r as i64).rem_euclid(self.n[k] as i64) as usize;
            } else {
                if r < 0.0 || r >= self.n[k] as f64 {
                    return Err(Error::Domain(format!("point {x:?} lies outside the grid")));
                }
                c[k] = r as usize;
            }
        }
        Ok(self.index(c[0], c[1]))
    }

    /// Displacement `x − y`, using the minimal periodic image on a torus.
    #[inline]
    pub fn displacement(&self, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        let mut d = [x[0] - y[0], x[1] - y[1]];
        if let Some(p) = self.period() {
            for k in 0..self.dim {
                d[k] -= p[k] * (d[k] / p[k]).round();
            }
        }
        if self.dim == 1 {
            d[1] = 0.0;
        }
        d
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    /// `Σ u · h^d`.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() * self.cell_volume()
    }
}
