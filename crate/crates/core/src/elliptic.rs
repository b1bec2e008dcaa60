//! Stationary problems `(s·I − L_h) u = f` with Dirichlet data.

use crate::error::{Error, Result};
use crate::operator::{Boundary, GridOperator};
use crate::solver::{bicgstab, CsrMatrix, SolveOptions, SolveReport};

/// Solves `s·u − L_h u = f` at interior nodes with `u = g` on Dirichlet nodes.
///
/// `g` is read only at boundary nodes. On a torus `s` must be positive.
pub fn solve_shifted(
    op: &GridOperator,
    shift: f64,
    f: &[f64],
    g: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<SolveReport> {
    let grid = &op.grid;
    let n = grid.len();
    if f.len() != n || g.is_some_and(|g| g.len() != n) {
        return Err(Error::Domain("right-hand side length does not match the grid".into()));
    }
    if f.iter().chain(g.unwrap_or(&[]).iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite data".into()));
    }
    if op.boundary == Boundary::Periodic && !(shift > 0.0) {
        return Err(Error::Domain(
            "the periodic problem without a zeroth-order term is singular".into(),
        ));
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !grid.is_boundary(i)).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in interior.iter().enumerate() {
        pos[i] = k;
    }
    let mut rhs = Vec::with_capacity(interior.len());
    let rows = interior
        .iter()
        .map(|&r| {
            let mut b = f[r];
            let mut row = vec![(pos[r], shift)];
            for (c, v) in op.matrix.row(r) {
                if pos[c] == usize::MAX {
                    b += v * g.map_or(0.0, |g| g[c]);
                } else {
                    row.push((pos[c], -v));
                }
            }
            rhs.push(b);
            row
        })
        .collect();
    let a = CsrMatrix::from_rows(interior.len(), rows);
    let rep = bicgstab(&a, &rhs, None, opts)?;
    let mut u = vec![0.0; n];
    for (k, &i) in interior.iter().enumerate() {
        u[i] = rep.x[k];
    }
    if let Some(g) = g {
        for i in 0..n {
            if grid.is_boundary(i) {
                u[i] = g[i];
            }
        }
    }
    Ok(SolveReport {
        x: u,
        iterations: rep.iterations,
        relative_residual: rep.relative_residual,
    })
}

/// Solves `−L_h u = f` in the interior with `u = g` on the boundary.
pub fn solve_elliptic_dirichlet(op: &GridOperator, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if op.boundary != Boundary::Dirichlet {
        return Err(Error::Domain("elliptic Dirichlet solve needs a box grid".into()));
    }
    Ok(solve_shifted(op, 0.0, f, Some(g), SolveOptions::default())?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CellLaw, ConstantCoefficients, EllipticityParams, FieldDescriptor, Interpolation, Topology};
    use crate::grid::Grid;
    use crate::operator::assemble_generator;
    use crate::sym::SymMat;

    #[test]
    fn constant_boundary_gives_constant() {
        let g = Grid::unit_box(2, 12).unwrap();
        let op = assemble_generator(&ConstantCoefficients(SymMat::new2(1.3, 0.2, 0.9)), &g).unwrap();
        let u = solve_elliptic_dirichlet(&op, &vec![0.0; g.len()], &vec![2.5; g.len()]).unwrap();
        assert!(u.iter().all(|&v| (v - 2.5).abs() < 1e-8));
    }

    #[test]
    fn quadratic_is_reproduced() {
        let g = Grid::unit_box(2, 16).unwrap();
        let op = assemble_generator(&ConstantCoefficients(SymMat::identity(2)), &g).unwrap();
        let q = g.sample(|x| x[0] * x[0] + x[1] * x[1]);
        let u = solve_elliptic_dirichlet(&op, &vec![-4.0; g.len()], &q).unwrap();
        let err = u.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err = {err}");
    }

    /// `−a u'' = 1` on (0,1) with `a = 1` on the left half and `2` on the right,
    /// `u(0) = u(1) = 0`. Integrating twice with continuity of `u` and `u'` at
    /// 1/2 gives `u = −x²/2 + c₁x` on the left and `u = −x²/4 + c₂x + c₃` on the
    /// right with `c₁ = 7/16`, `c₂ = 3/16`, `c₃ = 1/16`.
    #[test]
    fn piecewise_coefficient_closed_form() {
        let exact = |x: f64| {
            if x <= 0.5 {
                -x * x / 2.0 + 7.0 / 16.0 * x
            } else {
                -x * x / 4.0 + 3.0 / 16.0 * x + 1.0 / 16.0
            }
        };
        struct Halves;
        impl crate::field::Coefficients for Halves {
            fn dim(&self) -> usize {
                1
            }
            fn coeff(&self, x: [f64; 2]) -> SymMat {
                SymMat::new1(if x[0] < 0.5 { 1.0 } else { 2.0 })
            }
            fn ellipticity(&self) -> (f64, f64) {
                (1.0, 2.0)
            }
        }
        // Nodes avoid the interface so both one-sided equations hold exactly
        // except in the cell straddling it.
        for cells in [64usize, 128] {
            let g = Grid::boxed(1, [0.0; 2], 1.0 / cells as f64, cells + 1).unwrap();
            let op = assemble_generator(&Halves, &g).unwrap();
            let u = solve_elliptic_dirichlet(&op, &vec![1.0; g.len()], &vec![0.0; g.len()]).unwrap();
            let err = (0..g.len()).map(|i| (u[i] - exact(g.point(i)[0])).abs()).fold(0.0, f64::max);
            assert!(err < 2.0 / cells as f64 * 0.1, "cells = {cells}, err = {err}");
        }
        let field = FieldDescriptor::new(3, EllipticityParams::new(1.0, 2.0), 1, Topology::FreeSpace)
            .with_law(CellLaw::TwoPoint { low: 1.0, high: 2.0 })
            .with_interpolation(Interpolation::PiecewiseConstant)
            .build()
            .unwrap();
        let g = Grid::unit_box(1, 32).unwrap();
        let op = assemble_generator(&field, &g).unwrap();
        let u = solve_elliptic_dirichlet(&op, &vec![1.0; g.len()], &vec![0.0; g.len()]).unwrap();
        assert!(u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn periodic_without_shift_is_rejected() {
        let g = Grid::torus(2, 3, 2).unwrap();
        let op = assemble_generator(&ConstantCoefficients(SymMat::identity(2)), &g).unwrap();
        assert!(solve_shifted(&op, 0.0, &vec![1.0; g.len()], None, SolveOptions::default()).is_err());
        let u = solve_shifted(&op, 0.25, &vec![1.0; g.len()], None, SolveOptions::default()).unwrap();
        assert!(u.x.iter().all(|&v| (v - 4.0).abs() < 1e-9));
    }
}
