//! Effective matrix `ā` by approximate correctors and by measure averages,
//! Dirichlet correctors, and homogenization error of Cauchy–Dirichlet problems.

use serde::{Deserialize, Serialize};

use crate::adjoint::{stationary_measure_op, InvariantDensity, NullVectorMethod};
use crate::elliptic::solve_shifted;
use crate::error::{Error, Result};
use crate::field::{Coefficients, ConstantCoefficients, Scaled};
use crate::grid::Grid;
use crate::operator::assemble_generator;
use crate::parabolic::{solve_cauchy_dirichlet, BoundaryData, Scheme};
use crate::rate::{fit_rate, FitWindow, RateTable};
use crate::solver::SolveOptions;
use crate::sym::SymMat;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorSolution {
    pub i: usize,
    pub j: usize,
    /// Regularization `δ` (stationary route).
    pub delta: Option<f64>,
    /// Cube side `3^m` (Dirichlet route).
    pub cube_side: Option<f64>,
    pub grid: Grid,
    pub w: Vec<f64>,
    /// `δ²w` averaged over the torus or the central window (stationary route);
    /// `3^{−2m} sup|φ|` (Dirichlet route).
    pub estimate: f64,
}

/// Half-width of the central averaging window on a box, as a fraction of the box half-width.
pub const CENTRAL_WINDOW: f64 = 0.25;

/// Box for the stationary corrector: the zero-data error at the center is
/// below `tol` once the half-width exceeds `√Λ/δ · ln(1/tol)`.
pub fn corrector_box(dim: usize, big_lambda: f64, delta: f64, h: f64, tol: f64) -> Result<Grid> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Parameter(format!("tolerance {tol} must lie in (0, 1)")));
    }
    let half = big_lambda.sqrt() / delta * (1.0 / tol).ln() / (1.0 - CENTRAL_WINDOW);
    Grid::centered_box(dim, [0.0; 2], half, h)
}

fn central_window(grid: &Grid) -> Vec<usize> {
    let half: Vec<f64> = (0..grid.dim).map(|k| 0.5 * (grid.n[k] - 1) as f64 * grid.h).collect();
    let center: Vec<f64> = (0..grid.dim).map(|k| grid.origin[k] + half[k]).collect();
    (0..grid.len())
        .filter(|&i| {
            let p = grid.point(i);
            (0..grid.dim).all(|k| (p[k] - center[k]).abs() <= CENTRAL_WINDOW * half[k] + 1e-12)
        })
        .collect()
}

/// Solves `δ²w − L_h w = tr(A M)` with `M = ½(e_i⊗e_j + e_j⊗e_i)`, periodic on
/// a torus and with zero data on a box.
pub fn delta_corrector<C: Coefficients + ?Sized>(
    coeffs: &C,
    grid: &Grid,
    i: usize,
    j: usize,
    delta: f64,
) -> Result<CorrectorSolution> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!("delta = {delta} must lie in (0, 1]")));
    }
    if i >= grid.dim || j >= grid.dim {
        return Err(Error::Parameter(format!("index ({i}, {j}) out of range for d = {}", grid.dim)));
    }
    let op = assemble_generator(coeffs, grid)?;
    let m = SymMat::unit(grid.dim, i, j);
    let f: Vec<f64> = (0..grid.len())
        .map(|k| if grid.is_boundary(k) { 0.0 } else { coeffs.coeff(grid.point(k)).contract(&m) })
        .collect();
    let zero = vec![0.0; grid.len()];
    let opts = SolveOptions::default();
    let w = solve_shifted(&op, delta * delta, &f, (!grid.periodic).then_some(&zero[..]), opts)?.x;
    let nodes: Vec<usize> = if grid.periodic { (0..grid.len()).collect() } else { central_window(grid) };
    let estimate = delta * delta * nodes.iter().map(|&k| w[k]).sum::<f64>() / nodes.len() as f64;
    Ok(CorrectorSolution {
        i,
        j,
        delta: Some(delta),
        cube_side: None,
        grid: grid.clone(),
        w,
        estimate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AbarMethod {
    /// `δ²w^δ` along a decreasing ladder of `δ`.
    DeltaCorrector { deltas: Vec<f64> },
    /// `⨍ m·A` over centered cubes of increasing side on the torus.
    MeasureAverage { sides: Vec<f64> },
    /// Harmonic-mean formulas for one-dimensional and laminar fields.
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub scale: f64,
    pub abar: SymMat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogenizedMatrix {
    pub abar: SymMat,
    pub method: AbarMethod,
    pub ladder: Vec<LadderRung>,
    /// Frobenius distance between the last two rungs.
    pub spread: f64,
    pub low_confidence: bool,
}

/// Spread above which an estimate is flagged.
pub const DEFAULT_SPREAD_BOUND: f64 = 0.05;

fn finish_ladder(method: AbarMethod, ladder: Vec<LadderRung>, coeffs: &(impl Coefficients + ?Sized)) -> Result<HomogenizedMatrix> {
    let last = ladder.last().ok_or_else(|| Error::Parameter("empty ladder".into()))?.abar;
    let spread = if ladder.len() > 1 {
        last.sub(&ladder[ladder.len() - 2].abar).frobenius()
    } else {
        0.0
    };
    let (lam, big) = coeffs.ellipticity();
    let (e1, e2) = last.eigenvalues();
    let slack = 1e-8 + spread;
    let contained = e1 >= lam - slack && e2 <= big + slack && (last.dim == 1 || e2 >= lam - slack);
    Ok(HomogenizedMatrix {
        abar: last,
        method,
        ladder,
        low_confidence: spread > DEFAULT_SPREAD_BOUND || !contained,
        spread,
    })
}

/// Estimates `ā` on `grid` (a torus for the corrector and measure routes).
pub fn estimate_abar<C: Coefficients + ?Sized>(coeffs: &C, grid: &Grid, method: &AbarMethod) -> Result<HomogenizedMatrix> {
    let dim = grid.dim;
    match method {
        AbarMethod::DeltaCorrector { deltas } => {
            if deltas.is_empty() {
                return Err(Error::Parameter("empty delta ladder".into()));
            }
            let ladder = deltas
                .iter()
                .map(|&d| {
                    let mut a = SymMat::zero(dim);
                    for i in 0..dim {
                        for j in i..dim {
                            a.set(i, j, delta_corrector(coeffs, grid, i, j, d)?.estimate);
                        }
                    }
                    Ok(LadderRung { scale: d, abar: a })
                })
                .collect::<Result<Vec<_>>>()?;
            finish_ladder(method.clone(), ladder, coeffs)
        }
        AbarMethod::MeasureAverage { sides } => {
            if !grid.periodic {
                return Err(Error::Domain("the measure-average route needs a torus".into()));
            }
            let op = assemble_generator(coeffs, grid)?;
            let m = stationary_measure_op(&op, NullVectorMethod::Auto)?;
            let ladder = sides
                .iter()
                .map(|&s| {
                    Ok(LadderRung {
                        scale: s,
                        abar: measure_average(coeffs, &m, s)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            finish_ladder(method.clone(), ladder, coeffs)
        }
        AbarMethod::ClosedForm => {
            let a = closed_form_abar(coeffs, grid)?;
            finish_ladder(method.clone(), vec![LadderRung { scale: f64::INFINITY, abar: a }], coeffs)
        }
    }
}

/// `⨍ m·A` over the cube of the given side centered in the torus (the whole
/// torus when the side reaches the period).
pub fn measure_average<C: Coefficients + ?Sized>(coeffs: &C, m: &InvariantDensity, side: f64) -> Result<SymMat> {
    let grid = &m.grid;
    let p = grid.period().ok_or_else(|| Error::Domain("measure average needs a torus".into()))?;
    if !(side > 0.0) {
        return Err(Error::Parameter(format!("cube side {side} must be positive")));
    }
    let center = [p[0] / 2.0, p[1] / 2.0];
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            side >= p[0] || {
                let d = grid.displacement(grid.point(i), center);
                (0..grid.dim).all(|k| d[k] >= -side / 2.0 && d[k] < side / 2.0)
            }
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::Resolution { h: grid.h, limit: side });
    }
    let mut acc = SymMat::zero(grid.dim);
    for &i in &nodes {
        acc = acc.add(&coeffs.coeff(grid.point(i)).scale(m.values[i]));
    }
    Ok(acc.scale(1.0 / nodes.len() as f64))
}

/// Node-average formulas: `1/⟨1/a⟩` in one dimension, and for laminar
/// `A = diag(a(x₁), b(x₁))`, `diag(1/⟨1/a⟩, ⟨b/a⟩/⟨1/a⟩)`.
pub fn closed_form_abar<C: Coefficients + ?Sized>(coeffs: &C, grid: &Grid) -> Result<SymMat> {
    let n0 = grid.n[0];
    if grid.dim == 1 {
        let inv = (0..n0).map(|i| 1.0 / coeffs.coeff(grid.point(i)).a11).sum::<f64>() / n0 as f64;
        return Ok(SymMat::new1(1.0 / inv));
    }
    let mut inv = 0.0;
    let mut ratio = 0.0;
    for i in 0..n0 {
        let a0 = coeffs.coeff(grid.point(grid.index(i, 0)));
        for j in 1..grid.n[1] {
            let aj = coeffs.coeff(grid.point(grid.index(i, j)));
            if aj.sub(&a0).max_abs_entry() > 1e-14 * a0.max_abs_entry() {
                return Err(Error::Domain("closed form needs coefficients that depend on x1 only".into()));
            }
        }
        if a0.a12 != 0.0 {
            return Err(Error::Domain("closed form needs a diagonal laminar field".into()));
        }
        inv += 1.0 / a0.a11;
        ratio += a0.a22 / a0.a11;
    }
    let inv = inv / n0 as f64;
    let ratio = ratio / n0 as f64;
    Ok(SymMat::diag(2, 1.0 / inv, ratio / inv))
}

/// Solves `−L_h φ = tr(A M) − tr(ā M)` in the cube of side `3^m` centered at
/// the origin with `φ = 0` on the boundary.
pub fn dirichlet_corrector<C: Coefficients + ?Sized>(
    coeffs: &C,
    mat: &SymMat,
    abar: &SymMat,
    m: u32,
    h: f64,
) -> Result<CorrectorSolution> {
    let dim = coeffs.dim();
    if mat.dim != dim || abar.dim != dim {
        return Err(Error::Parameter("matrix dimensions do not match the field".into()));
    }
    let side = 3f64.powi(m as i32);
    let grid = Grid::centered_box(dim, [0.0; 2], side / 2.0, h)?;
    let op = assemble_generator(coeffs, &grid)?;
    let target = abar.contract(mat);
    let f: Vec<f64> = (0..grid.len())
        .map(|k| if grid.is_boundary(k) { 0.0 } else { coeffs.coeff(grid.point(k)).contract(mat) - target })
        .collect();
    let zero = vec![0.0; grid.len()];
    let opts = SolveOptions::default();
    let w = solve_shifted(&op, 0.0, &f, Some(&zero), opts)?.x;
    let sup = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (i, j) = if dim == 2 && mat.a12 != 0.0 { (0, 1) } else { (0, 0) };
    Ok(CorrectorSolution {
        i,
        j,
        delta: None,
        cube_side: Some(side),
        grid,
        w,
        estimate: sup / (side * side),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdErrorRow {
    pub eps: f64,
    pub h: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdErrorReport {
    pub rows: Vec<CdErrorRow>,
    /// Fit of `error ∝ ε^{β}`; `beta = −table.exponent`.
    pub table: RateTable,
    pub beta: f64,
}

/// Settings of the Cauchy–Dirichlet experiment on `(0, T] × (0, 1)^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdSetup {
    pub eps: Vec<f64>,
    /// Mesh size per rung; must satisfy `h ≤ ε/8`.
    pub h: Vec<f64>,
    pub t_final: f64,
    pub snapshots: Vec<f64>,
    pub scheme: Scheme,
    pub window: FitWindow,
}

/// For each `ε` solves `∂ₜu = tr(A(x/ε)D²u)` and `∂ₜū = tr(ā D²ū)` with the same
/// data `g` on the same grid and records `sup |u − ū|` over the snapshots.
pub fn cd_error_experiment<C: Coefficients + ?Sized>(
    coeffs: &C,
    abar: &SymMat,
    g: BoundaryData<'_>,
    setup: &CdSetup,
) -> Result<CdErrorReport> {
    let dim = coeffs.dim();
    if setup.eps.len() != setup.h.len() {
        return Err(Error::Parameter("one mesh size per epsilon is required".into()));
    }
    let mut rows = Vec::with_capacity(setup.eps.len());
    for (&eps, &h) in setup.eps.iter().zip(&setup.h) {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Parameter(format!("epsilon {eps} must lie in (0, 1]")));
        }
        if h > eps / 8.0 * (1.0 + 1e-12) {
            return Err(Error::Resolution { h, limit: eps / 8.0 });
        }
        let cells = (1.0 / h).round() as usize;
        let grid = Grid::unit_box(dim, cells)?;
        let u0 = grid.sample(|x| g(0.0, x));
        let scaled = Scaled { inner: coeffs, eps };
        let op = assemble_generator(&scaled, &grid)?;
        let hom = assemble_generator(&ConstantCoefficients(*abar), &grid)?;
        let a = solve_cauchy_dirichlet(&op, &u0, Some(g), setup.t_final, &setup.snapshots, setup.scheme)?;
        let b = solve_cauchy_dirichlet(&hom, &u0, Some(g), setup.t_final, &setup.snapshots, setup.scheme)?;
        let error = a
            .snapshots
            .iter()
            .zip(&b.snapshots)
            .flat_map(|(p, q)| p.values.iter().zip(&q.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        rows.push(CdErrorRow { eps, h, error });
    }
    let table = fit_rate(
        &rows.iter().map(|r| (r.eps, r.error.max(f64::MIN_POSITIVE))).collect::<Vec<_>>(),
        setup.window,
    )?;
    Ok(CdErrorReport {
        beta: -table.exponent,
        rows,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CellLaw, EllipticityParams, FieldDescriptor, Interpolation, Topology};

    #[test]
    fn identity_corrector_is_constant() {
        let g = Grid::torus(2, 3, 2).unwrap();
        let id = ConstantCoefficients(SymMat::identity(2));
        let c = delta_corrector(&id, &g, 0, 0, 0.5).unwrap();
        assert!(c.w.iter().all(|v| (v - 4.0).abs() < 1e-9));
        assert!((c.estimate - 1.0).abs() < 1e-10);
        let off = delta_corrector(&id, &g, 0, 1, 0.5).unwrap();
        assert!(off.estimate.abs() < 1e-12);
        let b = corrector_box(2, 1.0, 0.5, 0.5, 1e-6).unwrap();
        let c = delta_corrector(&id, &b, 1, 1, 0.5).unwrap();
        assert!((c.estimate - 1.0).abs() < 1e-6);
    }

    #[test]
    fn routes_agree_on_identity() {
        let g = Grid::torus(2, 3, 2).unwrap();
        let id = ConstantCoefficients(SymMat::identity(2));
        for method in [
            AbarMethod::DeltaCorrector { deltas: vec![0.5, 0.25] },
            AbarMethod::MeasureAverage { sides: vec![1.0, 3.0] },
            AbarMethod::ClosedForm,
        ] {
            let h = estimate_abar(&id, &g, &method).unwrap();
            assert!(h.abar.sub(&SymMat::identity(2)).max_abs_entry() < 1e-9, "{method:?}");
            assert!(!h.low_confidence);
        }
    }

    #[test]
    fn laminar_closed_form_and_measure_agree() {
        let field = FieldDescriptor::new(4, EllipticityParams::new(1.0, 2.0), 2, Topology::Torus { period: 9 })
            .with_law(CellLaw::Laminar { a: [1.0, 2.0], b: [1.0, 2.0] })
            .with_interpolation(Interpolation::PiecewiseConstant)
            .build()
            .unwrap();
        let g = Grid::torus(2, 9, 2).unwrap();
        let exact = closed_form_abar(&field, &g).unwrap();
        let mm = estimate_abar(&field, &g, &AbarMethod::MeasureAverage { sides: vec![9.0] }).unwrap();
        assert!(mm.abar.sub(&exact).max_abs_entry() < 1e-9);
        let nonlaminar = FieldDescriptor::new(4, EllipticityParams::new(1.0, 2.0), 2, Topology::Torus { period: 9 })
            .build()
            .unwrap();
        assert!(closed_form_abar(&nonlaminar, &g).is_err());
    }

    #[test]
    fn dirichlet_corrector_of_identity_vanishes() {
        let id = ConstantCoefficients(SymMat::identity(2));
        let c = dirichlet_corrector(&id, &SymMat::unit(2, 0, 0), &SymMat::identity(2), 1, 0.5).unwrap();
        assert!(c.w.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(c.cube_side, Some(3.0));
    }

    #[test]
    fn cd_error_rejects_underresolved_grid() {
        let id = ConstantCoefficients(SymMat::identity(1));
        let g = |_: f64, x: [f64; 2]| x[0];
        let setup = CdSetup {
            eps: vec![0.5],
            h: vec![0.25],
            t_final: 0.1,
            snapshots: vec![],
            scheme: Scheme::Explicit,
            window: FitWindow::All,
        };
        assert!(matches!(
            cd_error_experiment(&id, &SymMat::identity(1), &g, &setup),
            Err(Error::Resolution { .. })
        ));
    }
}
