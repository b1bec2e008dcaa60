//! The adjoint equation `L_h^T m = 0` and its analytic test cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Coefficients;
use crate::grid::Grid;
use crate::operator::{assemble_generator, Boundary, GridOperator};
use crate::parabolic::{holder_seminorm, IndexBox, CFL_SAFETY};
use crate::solver::{bicgstab, dot, norm2, CsrMatrix, SolveOptions};
use crate::sym::SymMat;

/// Transpose of a periodic generator.
pub fn adjoint_operator(op: &GridOperator) -> Result<GridOperator> {
    if op.boundary != Boundary::Periodic {
        return Err(Error::Domain("the adjoint oracle is defined on a torus only".into()));
    }
    Ok(op.transpose())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullVectorMethod {
    /// Power iteration when its estimated cost is moderate, reduced solve otherwise.
    Auto,
    /// Iterates the mass-preserving forward step `(I + dt·L_h)^T`.
    PowerIteration,
    /// Fixes `m` at node 0 and solves the remaining rows of `L_h^T m = 0`.
    ReducedSolve,
}

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 1_000_000;

/// Normalized null vector of `L_h^T` on a torus.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// `‖L_h^T m‖_∞`.
    pub residual: f64,
    /// `‖L_h^T m‖_∞ / (‖L_h‖_∞ ‖m‖_∞)`.
    pub relative_residual: f64,
    pub method: NullVectorMethod,
    pub iterations: usize,
}

impl InvariantDensity {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at the node nearest `x`.
    pub fn value_at(&self, x: [f64; 2]) -> Result<f64> {
        Ok(self.values[self.grid.nearest_node(x)?])
    }
}

fn power_iterations_estimate(op: &GridOperator) -> f64 {
    let p = op.grid.period().map_or(1.0, |p| p[0]);
    let diag = op.matrix.diagonal();
    let lam_min = diag.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min) * op.grid.h * op.grid.h
        / (2.0 * op.grid.dim as f64);
    let gap = lam_min * (2.0 * std::f64::consts::PI / p).powi(2);
    let dt = CFL_SAFETY * op.explicit_dt_bound();
    (1.0 / POWER_TOL).ln() / (dt * gap)
}

fn finish(op: &GridOperator, adj: &CsrMatrix, mut m: Vec<f64>, method: NullVectorMethod, iterations: usize) -> Result<InvariantDensity> {
    let scale = m.len() as f64 / m.iter().sum::<f64>();
    for v in &mut m {
        *v *= scale;
    }
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.iter().copied().fold(0.0, f64::max);
    if !(lo > -1e-12 * hi) {
        return Err(Error::NonUnique(format!(
            "null vector changes sign (min {lo:e}, max {hi:e})"
        )));
    }
    for v in &mut m {
        *v = v.max(0.0);
    }
    let r = adj.mul(&m);
    let residual = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(InvariantDensity {
        grid: op.grid.clone(),
        relative_residual: residual / (op.matrix.norm_inf() * hi),
        residual,
        values: m,
        method,
        iterations,
    })
}

/// Null vector of the transpose of a periodic generator, normalized to mean one.
pub fn stationary_measure_op(op: &GridOperator, method: NullVectorMethod) -> Result<InvariantDensity> {
    let adj = adjoint_operator(op)?.matrix;
    if !op.is_irreducible() {
        return Err(Error::NonUnique("generator graph is not strongly connected".into()));
    }
    let n = op.len();
    let method = match method {
        NullVectorMethod::Auto if power_iterations_estimate(op) <= 1e5 => NullVectorMethod::PowerIteration,
        NullVectorMethod::Auto => NullVectorMethod::ReducedSolve,
        m => m,
    };
    match method {
        NullVectorMethod::PowerIteration => {
            let dt = CFL_SAFETY * op.explicit_dt_bound();
            let mut m = vec![1.0; n];
            let mut lm = vec![0.0; n];
            for it in 1..=POWER_MAX_ITER {
                adj.matvec(&m, &mut lm);
                let mut change = 0.0f64;
                let mut top = 0.0f64;
                for (mi, li) in m.iter_mut().zip(&lm) {
                    *mi += dt * li;
                    change = change.max((dt * li).abs());
                    top = top.max(mi.abs());
                }
                if change <= POWER_TOL * top {
                    return finish(op, &adj, m, method, it);
                }
            }
            Err(Error::NonConvergence {
                iterations: POWER_MAX_ITER,
                residual: f64::NAN,
            })
        }
        _ => {
            let rest: Vec<usize> = (1..n).collect();
            let sub = adj.restrict(&rest, &rest);
            let rhs: Vec<f64> = rest.iter().map(|&r| -adj.get(r, 0)).collect();
            let rep = bicgstab(
                &sub,
                &rhs,
                None,
                SolveOptions {
                    rtol: 1e-13,
                    ..SolveOptions::default()
                },
            )?;
            let mut m = Vec::with_capacity(n);
            m.push(1.0);
            m.extend(rep.x);
            finish(op, &adj, m, NullVectorMethod::ReducedSolve, rep.iterations)
        }
    }
}

/// Invariant density of `coeffs` on the torus of the given period.
pub fn stationary_measure_torus<C: Coefficients + ?Sized>(
    coeffs: &C,
    period: usize,
    nodes_per_unit: usize,
    method: NullVectorMethod,
) -> Result<InvariantDensity> {
    if period < 3 {
        return Err(Error::Parameter(format!("torus period {period} must be at least 3")));
    }
    let grid = Grid::torus(coeffs.dim(), period, nodes_per_unit)?;
    let op = assemble_generator(coeffs, &grid)?;
    stationary_measure_op(&op, method)
}

/// Spectral evidence that the null space of `L_h^T` is one-dimensional.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NullSpaceReport {
    /// `σ_min` of `L_h^T` with row and column 0 removed; by interlacing it
    /// bounds the second smallest singular value from below.
    pub second_singular_value: f64,
    pub operator_norm: f64,
    pub ratio: f64,
}

impl NullSpaceReport {
    pub fn is_simple(&self, threshold: f64) -> bool {
        self.ratio > threshold
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let s = norm2(v);
    for x in v.iter_mut() {
        *x /= s;
    }
    s
}

/// Estimates the spectral norm and the reduced smallest singular value by
/// power and inverse iteration.
pub fn null_space_check(op: &GridOperator) -> Result<NullSpaceReport> {
    let adj = adjoint_operator(op)?.matrix;
    let adj_t = op.matrix.clone();
    let n = adj.n_rows;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    normalize(&mut v);
    let mut norm = 0.0;
    for _ in 0..200 {
        v = adj_t.mul(&adj.mul(&v));
        let s = normalize(&mut v).sqrt();
        if (s - norm).abs() <= 1e-6 * s {
            norm = s;
            break;
        }
        norm = s;
    }

    let rest: Vec<usize> = (1..n).collect();
    let b = adj.restrict(&rest, &rest);
    let bt = b.transpose();
    let opts = SolveOptions {
        rtol: 1e-10,
        ..SolveOptions::default()
    };
    let mut x: Vec<f64> = (0..n - 1).map(|i| 1.0 + ((i * 104729) % 97) as f64 / 97.0).collect();
    normalize(&mut x);
    let mut sigma = f64::INFINITY;
    for _ in 0..100 {
        let y = bicgstab(&bt, &x, None, opts)?.x;
        let mut z = bicgstab(&b, &y, None, opts)?.x;
        let growth = dot(&z, &x);
        normalize(&mut z);
        let s = 1.0 / growth.abs().sqrt();
        x = z;
        if (s - sigma).abs() <= 1e-8 * s {
            sigma = s;
            break;
        }
        sigma = s;
    }
    Ok(NullSpaceReport {
        second_singular_value: sigma,
        operator_norm: norm,
        ratio: sigma / norm,
    })
}

/// `A(x) = λ(I − x⊗x/|x|²) + Λ x⊗x/|x|²`, whose invariant density is `|x|^{−γ}`
/// with `γ = (d − 1)(Λ − λ)/Λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub lambda: f64,
    pub big_lambda: f64,
    pub dim: usize,
}

impl RadialField {
    pub fn new(lambda: f64, big_lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "need 0 < lambda <= Lambda, got ({lambda}, {big_lambda})"
            )));
        }
        if dim != 2 {
            return Err(Error::Parameter("the radial example is implemented in d = 2".into()));
        }
        Ok(Self { lambda, big_lambda, dim })
    }

    pub fn gamma(&self) -> f64 {
        (self.dim as f64 - 1.0) * (self.big_lambda - self.lambda) / self.big_lambda
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        (x[0] * x[0] + x[1] * x[1]).sqrt().powf(-self.gamma())
    }
}

impl Coefficients for RadialField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn coeff(&self, x: [f64; 2]) -> SymMat {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return SymMat::scalar(2, self.lambda);
        }
        let s = (self.big_lambda - self.lambda) / r2;
        SymMat::new2(
            self.lambda + s * x[0] * x[0],
            s * x[0] * x[1],
            self.lambda + s * x[1] * x[1],
        )
    }
    fn ellipticity(&self) -> (f64, f64) {
        (self.lambda, self.big_lambda)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialRow {
    pub h: f64,
    /// `max |m_h − |x|^{−γ}| / |x|^{−γ}` over annulus nodes.
    pub relative_error: f64,
    pub unknowns: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialReport {
    pub gamma: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub rows: Vec<RadialRow>,
}

impl RadialReport {
    /// Errors strictly decrease along the (decreasing) mesh sizes.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].relative_error < w[0].relative_error)
    }
}

/// Solves `L_h^T m = 0` on nodes with `r_in < |x| < r_out`, with `m = |x|^{−γ}`
/// prescribed at the remaining nodes, and compares with `|x|^{−γ}`.
pub fn radial_error(field: &RadialField, r_in: f64, r_out: f64, h: f64) -> Result<RadialRow> {
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::Domain(format!(
            "annulus [{r_in}, {r_out}] must satisfy 0 < r_in < r_out"
        )));
    }
    if r_in < 2.0 * h {
        return Err(Error::Domain(format!("annulus inner radius {r_in} is not resolved at h = {h}")));
    }
    let grid = Grid::centered_box(2, [0.0; 2], r_out + 2.0 * h, h)?;
    let op = assemble_generator(field, &grid)?;
    let adj = op.matrix.transpose();
    let radius = |i: usize| {
        let p = grid.point(i);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    };
    let inside: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let r = radius(i);
            r > r_in && r < r_out
        })
        .collect();
    let exact: Vec<f64> = (0..grid.len())
        .map(|i| if radius(i) > 0.0 { field.density(grid.point(i)) } else { 0.0 })
        .collect();
    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &i) in inside.iter().enumerate() {
        pos[i] = k;
    }
    let mut rhs = vec![0.0; inside.len()];
    let rows = inside
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let mut row = Vec::with_capacity(9);
            for (c, v) in adj.row(r) {
                if pos[c] == usize::MAX {
                    rhs[k] -= v * exact[c];
                } else {
                    row.push((pos[c], v));
                }
            }
            row
        })
        .collect();
    let a = CsrMatrix::from_rows(inside.len(), rows);
    let guess: Vec<f64> = inside.iter().map(|&i| exact[i]).collect();
    let rep = bicgstab(
        &a,
        &rhs,
        Some(&guess),
        SolveOptions {
            rtol: 1e-12,
            ..SolveOptions::default()
        },
    )?;
    let relative_error = inside
        .iter()
        .zip(&rep.x)
        .map(|(&i, v)| ((v - exact[i]) / exact[i]).abs())
        .fold(0.0, f64::max);
    Ok(RadialRow {
        h,
        relative_error,
        unknowns: inside.len(),
        iterations: rep.iterations,
    })
}

pub fn radial_example_check(
    lambda: f64,
    big_lambda: f64,
    r_in: f64,
    r_out: f64,
    hs: &[f64],
) -> Result<RadialReport> {
    let field = RadialField::new(lambda, big_lambda, 2)?;
    let rows = hs
        .iter()
        .map(|&h| radial_error(&field, r_in, r_out, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(RadialReport {
        gamma: field.gamma(),
        r_in,
        r_out,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityRow {
    pub r: f64,
    /// `(⨍_{B_{r/2}} m^q)^{1/q}`.
    pub lq_half: f64,
    /// `⨍_{B_r} m`.
    pub l1: f64,
    pub ratio: f64,
}

fn ball_nodes(grid: &Grid, center: [f64; 2], r: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            let d = grid.displacement(grid.point(i), center);
            d[0] * d[0] + d[1] * d[1] < r * r
        })
        .collect()
}

fn check_ball(grid: &Grid, center: [f64; 2], r: f64) -> Result<()> {
    let fits = match grid.period() {
        Some(p) => 2.0 * r < p[0].min(if grid.dim == 2 { p[1] } else { p[0] }),
        None => (0..grid.dim).all(|k| {
            let lo = grid.origin[k];
            let hi = lo + (grid.n[k] - 1) as f64 * grid.h;
            center[k] - r >= lo && center[k] + r <= hi
        }),
    };
    if fits {
        Ok(())
    } else {
        Err(Error::Domain(format!("ball of radius {r} around {center:?} does not fit in the domain")))
    }
}

/// Volume-normalized `L^q(B_{r/2})` to `L¹(B_r)` ratios of a density across radii.
pub fn integrability_ratio(
    grid: &Grid,
    m: &[f64],
    center: [f64; 2],
    q: f64,
    radii: &[f64],
) -> Result<Vec<IntegrabilityRow>> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Parameter(format!("exponent q = {q} must lie in (1, inf)")));
    }
    radii
        .iter()
        .map(|&r| {
            check_ball(grid, center, r)?;
            let half = ball_nodes(grid, center, r / 2.0);
            let full = ball_nodes(grid, center, r);
            if half.is_empty() {
                return Err(Error::Resolution { h: grid.h, limit: r / 2.0 });
            }
            let lq = (half.iter().map(|&i| m[i].abs().powf(q)).sum::<f64>() / half.len() as f64).powf(1.0 / q);
            let l1 = full.iter().map(|&i| m[i].abs()).sum::<f64>() / full.len() as f64;
            Ok(IntegrabilityRow {
                r,
                lq_half: lq,
                l1,
                ratio: lq / l1,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub r: f64,
    pub alpha: f64,
    pub sup: f64,
    pub seminorm: f64,
    /// `⨍_{B_{2r}} m`.
    pub l1_double: f64,
    /// `(sup + r^α [m]_α) / (r^α K₀ ⨍_{B_{2r}} m)`.
    pub constant: f64,
}

/// Local Hölder size of `m` on the square of half-width `r` around `center`.
pub fn holder_bound_check(
    density: &InvariantDensity,
    k0: f64,
    center: [f64; 2],
    r: f64,
    alpha: f64,
) -> Result<HolderReport> {
    let grid = &density.grid;
    if let Some(p) = grid.period() {
        if r > p[0] / 4.0 {
            return Err(Error::Domain(format!("radius {r} exceeds a quarter period")));
        }
    }
    check_ball(grid, center, 2.0 * r)?;
    let c = grid.nearest_node(center)?;
    let k = (r / grid.h).round() as usize;
    let [ci, cj] = grid.coords(c);
    if ci < k || cj < k || ci + k >= grid.n[0] || (grid.dim == 2 && cj + k >= grid.n[1]) {
        return Err(Error::Domain("Hölder box crosses the grid seam".into()));
    }
    let region = IndexBox::around(grid, c, k);
    let seminorm = holder_seminorm(&density.values, grid, region, alpha)?;
    let mut sup = 0.0f64;
    for j in region.lo[1]..=region.hi[1] {
        for i in region.lo[0]..=region.hi[0] {
            sup = sup.max(density.values[grid.index(i, j)].abs());
        }
    }
    let full = ball_nodes(grid, center, 2.0 * r);
    let l1 = full.iter().map(|&i| density.values[i]).sum::<f64>() / full.len() as f64;
    let ra = r.powf(alpha);
    Ok(HolderReport {
        r,
        alpha,
        sup,
        seminorm,
        l1_double: l1,
        constant: (sup + ra * seminorm) / (ra * k0 * l1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CellLaw, ConstantCoefficients, EllipticityParams, FieldDescriptor, Interpolation, Topology};

    #[test]
    fn identity_measure_is_one() {
        for method in [NullVectorMethod::PowerIteration, NullVectorMethod::ReducedSolve] {
            let m = stationary_measure_torus(&ConstantCoefficients(SymMat::identity(2)), 4, 2, method).unwrap();
            assert!(m.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn dirichlet_operator_is_rejected() {
        let g = Grid::unit_box(2, 8).unwrap();
        let op = assemble_generator(&ConstantCoefficients(SymMat::identity(2)), &g).unwrap();
        assert!(adjoint_operator(&op).is_err());
    }

    #[test]
    fn one_dimensional_harmonic_mean_law() {
        let field = FieldDescriptor::new(11, EllipticityParams::new(1.0, 2.0), 1, Topology::Torus { period: 9 })
            .with_law(CellLaw::TwoPoint { low: 1.0, high: 2.0 })
            .with_interpolation(Interpolation::PiecewiseConstant)
            .build()
            .unwrap();
        for method in [NullVectorMethod::PowerIteration, NullVectorMethod::ReducedSolve] {
            let m = stationary_measure_torus(&field, 9, 4, method).unwrap();
            let am: Vec<f64> = (0..m.grid.len())
                .map(|i| m.values[i] * field.coeff(m.grid.point(i)).a11)
                .collect();
            let c = am[0];
            assert!(am.iter().all(|v| ((v - c) / c).abs() < 1e-9), "{method:?}");
            assert!((m.mean() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn null_space_is_simple_for_random_field() {
        let field = FieldDescriptor::new(2, EllipticityParams::new(1.0, 2.0), 2, Topology::Torus { period: 5 })
            .build()
            .unwrap();
        let g = Grid::torus(2, 5, 2).unwrap();
        let op = assemble_generator(&field, &g).unwrap();
        let rep = null_space_check(&op).unwrap();
        assert!(rep.is_simple(1e-8), "{rep:?}");
        let m = stationary_measure_op(&op, NullVectorMethod::Auto).unwrap();
        assert!(m.min() > 0.0);
        assert!(m.relative_residual < 1e-10);
    }

    #[test]
    fn radial_gamma_and_isotropic_case() {
        let f = RadialField::new(1.0, 2.0, 2).unwrap();
        assert_eq!(f.gamma(), 0.5);
        let iso = radial_example_check(1.0, 1.0, 0.2, 0.8, &[1.0 / 16.0]).unwrap();
        assert!(iso.rows[0].relative_error < 1e-8);
        assert!(radial_error(&f, 0.0, 0.8, 0.1).is_err());
    }

    #[test]
    fn integrability_of_constant() {
        let g = Grid::torus(2, 9, 1).unwrap();
        let rows = integrability_ratio(&g, &vec![1.0; g.len()], [4.0, 4.0], 2.0, &[2.0, 4.0]).unwrap();
        assert!(rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-14));
        assert!(integrability_ratio(&g, &vec![1.0; g.len()], [4.0, 4.0], 2.0, &[5.0]).is_err());
    }
}
