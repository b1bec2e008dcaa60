//! Positive-type finite-difference discretization of `u ↦ tr(A D²u)`.
//!
//! In two dimensions the stencil is the sign-adapted nine-point scheme: pure
//! second differences carry `a₁₁ − |a₁₂|` and `a₂₂ − |a₁₂|`, and the mixed term
//! uses the diagonal pair aligned with `sign(a₁₂)` with weight `|a₁₂|`. All
//! off-diagonal weights are nonnegative exactly when `|a₁₂| ≤ min(a₁₁, a₂₂)`,
//! every row sums to zero, and the scheme is exact on quadratics with frozen
//! coefficients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Coefficients;
use crate::grid::Grid;
use crate::solver::CsrMatrix;
use crate::sym::SymMat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// Sparse generator `L_h` on a grid (or its transpose).
#[derive(Clone, Debug)]
pub struct GridOperator {
    pub grid: Grid,
    pub matrix: CsrMatrix,
    pub boundary: Boundary,
    pub transposed: bool,
}

/// Stencil entries `(di, dj, weight)` at one node, before scaling by `1/h²`.
pub fn stencil(a: &SymMat) -> Vec<(isize, isize, f64)> {
    if a.dim == 1 {
        return vec![(0, 0, -2.0 * a.a11), (-1, 0, a.a11), (1, 0, a.a11)];
    }
    let c = a.a12.abs();
    let mut s = vec![
        (0, 0, -2.0 * (a.a11 + a.a22 - c)),
        (-1, 0, a.a11 - c),
        (1, 0, a.a11 - c),
        (0, -1, a.a22 - c),
        (0, 1, a.a22 - c),
    ];
    if c > 0.0 {
        if a.a12 > 0.0 {
            s.push((1, 1, c));
            s.push((-1, -1, c));
        } else {
            s.push((1, -1, c));
            s.push((-1, 1, c));
        }
    }
    s
}

fn admissible(a: &SymMat) -> std::result::Result<(), String> {
    if !a.is_finite() {
        return Err("non-finite coefficient".into());
    }
    if a.a11 <= 0.0 || (a.dim == 2 && a.a22 <= 0.0) {
        return Err(format!("nonpositive diagonal in {a:?}"));
    }
    if a.dim == 2 {
        let slack = 1e-12 * (a.a11 + a.a22);
        if a.a12.abs() > a.a11.min(a.a22) + slack {
            return Err(format!(
                "|a12| = {} exceeds min(a11, a22) = {}",
                a.a12.abs(),
                a.a11.min(a.a22)
            ));
        }
    }
    Ok(())
}

/// Assembles `L_h` for the coefficients on `grid`.
///
/// Box grids get empty rows on the outermost layer (Dirichlet nodes); tori get
/// periodic rows everywhere.
pub fn assemble_generator<C: Coefficients + ?Sized>(coeffs: &C, grid: &Grid) -> Result<GridOperator> {
    if coeffs.dim() != grid.dim {
        return Err(Error::Domain(format!(
            "coefficient dimension {} does not match grid dimension {}",
            coeffs.dim(),
            grid.dim
        )));
    }
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let rows: Vec<std::result::Result<Vec<(usize, f64)>, Error>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if grid.is_boundary(idx) {
                return Ok(Vec::new());
            }
            let x = grid.point(idx);
            let mut a = coeffs.coeff(x);
            if a.a12.abs() > a.a11.min(a.a22) && a.dim == 2 {
                // Clip rounding-level excursions allowed by `admissible`.
                admissible(&a).map_err(|reason| Error::Assembly { node: idx, x, reason })?;
                a.a12 = a.a12.signum() * a.a11.min(a.a22);
            }
            admissible(&a).map_err(|reason| Error::Assembly { node: idx, x, reason })?;
            let mut row = Vec::with_capacity(9);
            for (di, dj, w) in stencil(&a) {
                let nb = grid.neighbor(idx, di, dj).ok_or_else(|| {
                    Error::Domain(format!("node {idx} has no neighbor at offset ({di}, {dj})"))
                })?;
                row.push((nb, w * inv_h2));
            }
            Ok(row)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GridOperator {
        grid: grid.clone(),
        matrix: CsrMatrix::from_rows(grid.len(), rows),
        boundary: if grid.periodic {
            Boundary::Periodic
        } else {
            Boundary::Dirichlet
        },
        transposed: false,
    })
}

impl GridOperator {
    pub fn len(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul(u)
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.matrix.matvec(u, out);
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        self.matrix.diagonal().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Largest explicit Euler step keeping `I + dt·L_h` entrywise nonnegative.
    pub fn explicit_dt_bound(&self) -> f64 {
        let d = self.max_abs_diagonal();
        if d > 0.0 {
            1.0 / d
        } else {
            f64::INFINITY
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|r| self.matrix.row(r).map(|e| e.1).sum()).collect()
    }

    /// Checks the M-matrix sign pattern of `−L_h`.
    pub fn is_positive_type(&self) -> bool {
        (0..self.len()).all(|r| {
            self.matrix
                .row(r)
                .all(|(c, v)| if c == r { v <= 0.0 } else { v >= 0.0 })
        })
    }

    /// Plain transpose with the same grid and boundary flag.
    pub fn transpose(&self) -> GridOperator {
        GridOperator {
            grid: self.grid.clone(),
            matrix: self.matrix.transpose(),
            boundary: self.boundary,
            transposed: !self.transposed,
        }
    }

    /// Whether the directed graph of off-diagonal couplings is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let reach = |m: &CsrMatrix| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(r) = stack.pop() {
                for (c, v) in m.row(r) {
                    if c != r && v != 0.0 && !seen[c] {
                        seen[c] = true;
                        count += 1;
                        stack.push(c);
                    }
                }
            }
            count == n
        };
        reach(&self.matrix) && reach(&self.matrix.transpose())
    }
}
