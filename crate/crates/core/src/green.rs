//! Discrete parabolic Green functions `P(t, ·, y)`.
//!
//! The forward (nondivergence) evolution does not conserve mass; the mass
//! `∫ P(t, x, y) dx` converges to the invariant density `m(y)` and the shape
//! of `P` approaches `m(y)` times the homogenized Gaussian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Coefficients;
use crate::grid::Grid;
use crate::operator::{assemble_generator, GridOperator};
use crate::parabolic::{Evolver, Scheme};
use crate::sym::SymMat;

/// Peak-relative floor below which kernel values are treated as zero.
pub const KERNEL_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSnapshot {
    pub time: f64,
    /// Position of the source node.
    pub source: [f64; 2],
    pub source_node: usize,
    pub values: Vec<f64>,
    pub mass: f64,
    pub grid: Grid,
}

/// `Σ P · h^d`.
pub fn kernel_mass(snapshot: &KernelSnapshot) -> f64 {
    snapshot.grid.integrate(&snapshot.values)
}

/// Discrete delta `h^{−d}` at the node nearest `y`.
pub fn discrete_delta(grid: &Grid, y: [f64; 2]) -> Result<(usize, Vec<f64>)> {
    let node = grid.nearest_node(y)?;
    if grid.is_boundary(node) {
        return Err(Error::Domain(format!("source {y:?} sits on the Dirichlet boundary")));
    }
    let mut u = vec![0.0; grid.len()];
    u[node] = 1.0 / grid.cell_volume();
    Ok((node, u))
}

/// Dirichlet box around `center` large enough that the Gaussian supersolution
/// with `θ = 4Λ` is below `tol` (relative to its peak) on the boundary at `t_max`.
pub fn free_space_box(dim: usize, big_lambda: f64, center: [f64; 2], t_max: f64, tol: f64, h: f64) -> Result<Grid> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Parameter(format!("truncation tolerance {tol} must lie in (0, 1)")));
    }
    let theta = 4.0 * big_lambda;
    let half = (theta * t_max * (1.0 / tol).ln()).sqrt() + 2.0 * h;
    Grid::centered_box(dim, center, half, h)
}

fn snapshot(grid: &Grid, node: usize, time: f64, values: Vec<f64>) -> KernelSnapshot {
    let mass = grid.integrate(&values);
    KernelSnapshot {
        time,
        source: grid.point(node),
        source_node: node,
        values,
        mass,
        grid: grid.clone(),
    }
}

/// Evolves a discrete delta at `y` and records snapshots at increasing `times`.
pub fn green_evolve_op(op: &GridOperator, y: [f64; 2], times: &[f64], scheme: Scheme) -> Result<Vec<KernelSnapshot>> {
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("snapshot times must be positive and increasing".into()));
    }
    let (node, u0) = discrete_delta(&op.grid, y)?;
    let mut ev = Evolver::new(op, u0, scheme)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        ev.advance_to(t)?;
        out.push(snapshot(&op.grid, node, t, ev.state().to_vec()));
    }
    Ok(out)
}

pub fn green_evolve<C: Coefficients + ?Sized>(
    coeffs: &C,
    grid: &Grid,
    y: [f64; 2],
    times: &[f64],
    scheme: Scheme,
) -> Result<Vec<KernelSnapshot>> {
    let op = assemble_generator(coeffs, grid)?;
    green_evolve_op(&op, y, times, scheme)
}

/// Limiting mass `m(y)` with its dyadic increment history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantDensityValue {
    pub y: [f64; 2],
    pub m_y: f64,
    pub t_star: f64,
    /// `(t, mass(t), |mass(t) − mass(t/2)|)` along the dyadic ladder.
    pub history: Vec<(f64, f64, f64)>,
}

impl InvariantDensityValue {
    pub fn tail(&self) -> Vec<f64> {
        self.history.iter().skip(1).map(|h| h.2).collect()
    }
}

/// Runs the Green evolution over the dyadic ladder `t_start·2^k` until
/// `|mass(2t) − mass(t)| < rtol·mass(t)` with a decreasing increment.
pub fn invariant_density_at(
    op: &GridOperator,
    y: [f64; 2],
    rtol: f64,
    t_start: f64,
    t_max: f64,
    scheme: Scheme,
) -> Result<InvariantDensityValue> {
    if !(rtol > 1e-8 && rtol < 1e-2) {
        return Err(Error::Parameter(format!("rtol = {rtol} must lie in (1e-8, 1e-2)")));
    }
    if !(t_start > 0.0 && t_max >= 2.0 * t_start) {
        return Err(Error::Parameter("need 0 < t_start and t_max >= 2 t_start".into()));
    }
    let (node, u0) = discrete_delta(&op.grid, y)?;
    let mut ev = Evolver::new(op, u0, scheme)?;
    let mut t = t_start;
    ev.advance_to(t)?;
    let mut prev = op.grid.integrate(ev.state());
    let mut history = vec![(t, prev, f64::NAN)];
    let mut last_inc = f64::INFINITY;
    while 2.0 * t <= t_max * (1.0 + 1e-12) {
        t *= 2.0;
        ev.advance_to(t)?;
        let mass = op.grid.integrate(ev.state());
        let inc = (mass - prev).abs();
        history.push((t, mass, inc));
        if inc < rtol * mass && inc < last_inc {
            return Ok(InvariantDensityValue {
                y: op.grid.point(node),
                m_y: mass,
                t_star: t,
                history,
            });
        }
        last_inc = inc;
        prev = mass;
    }
    Err(Error::NotSettled {
        what: format!("Green function mass at {y:?}"),
        history: history.iter().skip(1).map(|h| h.2).collect(),
    })
}

/// Widths of the Gaussian envelopes `exp(−|x−y|²/(b t))` (lower) and
/// `exp(−|x−y|²/(B t))` (upper).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeWidths {
    pub lower: f64,
    pub upper: f64,
}

impl EnvelopeWidths {
    /// `b = 2λ`, `B = 8Λ`.
    pub fn for_ellipticity(lambda: f64, big_lambda: f64) -> Self {
        Self {
            lower: 2.0 * lambda,
            upper: 8.0 * big_lambda,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub c: f64,
    pub big_c: f64,
    pub widths: EnvelopeWidths,
    /// Nodes where the lower Gaussian is above the floor but `P` is not.
    pub violations: usize,
    pub window: (f64, f64),
}

impl EnvelopeFit {
    pub fn ratio(&self) -> f64 {
        self.big_c / self.c
    }
}

/// Fits the largest `c` and smallest `C` with
/// `c·m(y)·t^{−d/2}·e^{−|x−y|²/(bt)} ≤ P(t,x,y) ≤ C·m(y)·t^{−d/2}·e^{−|x−y|²/(Bt)}`
/// over all nodes with `P` above the floor, for snapshots with `t ≥ t0`.
pub fn nash_aronson_fit(
    snapshots: &[KernelSnapshot],
    m_y: f64,
    widths: EnvelopeWidths,
    t0: f64,
) -> Result<EnvelopeFit> {
    let window: Vec<&KernelSnapshot> = snapshots.iter().filter(|s| s.time >= t0).collect();
    if window.is_empty() {
        return Err(Error::Domain(format!("no snapshots at or after t0 = {t0}")));
    }
    if !(m_y > 0.0) {
        return Err(Error::Parameter(format!("m(y) = {m_y} must be positive")));
    }
    let mut c = f64::INFINITY;
    let mut big_c: f64 = 0.0;
    let mut violations = 0;
    for s in &window {
        let g = &s.grid;
        let t = s.time;
        let scale = m_y * t.powf(-(g.dim as f64) / 2.0);
        let peak = s.values.iter().fold(0.0f64, |m, &v| m.max(v));
        let floor = KERNEL_FLOOR * peak;
        for (idx, &p) in s.values.iter().enumerate() {
            let d = g.displacement(g.point(idx), s.source);
            let r2 = d[0] * d[0] + d[1] * d[1];
            let low = (-r2 / (widths.lower * t)).exp();
            let up = (-r2 / (widths.upper * t)).exp();
            if p >= floor && p > 0.0 {
                c = c.min(p / (scale * low));
                big_c = big_c.max(p / (scale * up));
            } else if low >= KERNEL_FLOOR {
                violations += 1;
            }
        }
    }
    Ok(EnvelopeFit {
        c,
        big_c,
        widths,
        violations,
        window: (window[0].time, window[window.len() - 1].time),
    })
}

/// Gaussian kernel of `∂ₜ − tr(ā D²)` at displacement `x`.
pub fn homogenized_kernel(abar: &SymMat, t: f64, x: [f64; 2]) -> f64 {
    let d = abar.dim as f64;
    let inv = abar.inverse().expect("homogenized matrix must be invertible");
    (4.0 * std::f64::consts::PI * t).powf(-d / 2.0) / abar.det().sqrt() * (-inv.quad(x) / (4.0 * t)).exp()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltDeviation {
    pub values: Vec<f64>,
    pub sup: f64,
    /// `t^{d/2} · sup`.
    pub normalized: f64,
}

/// `|P(t,·,y) − c·P̄(t, · − y)|` and its sup normalized by `t^{−d/2}`.
pub fn clt_deviation(snapshot: &KernelSnapshot, c: f64, abar: &SymMat) -> Result<CltDeviation> {
    if !abar.is_spd() {
        return Err(Error::Parameter(format!("homogenized matrix {abar:?} is not positive definite")));
    }
    let g = &snapshot.grid;
    let values: Vec<f64> = snapshot
        .values
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let d = g.displacement(g.point(idx), snapshot.source);
            (p - c * homogenized_kernel(abar, snapshot.time, d)).abs()
        })
        .collect();
    let sup = values.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(CltDeviation {
        normalized: sup * snapshot.time.powf(g.dim as f64 / 2.0),
        values,
        sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantCoefficients;

    #[test]
    fn delta_has_unit_mass() {
        let g = Grid::centered_box(2, [0.0; 2], 2.0, 0.25).unwrap();
        let (_, u) = discrete_delta(&g, [0.0, 0.0]).unwrap();
        let s = snapshot(&g, 0, 0.0, u);
        assert_eq!(kernel_mass(&s), 1.0);
        assert!(discrete_delta(&g, [-2.0, 0.0]).is_err());
    }

    #[test]
    fn identity_kernel_matches_heat_kernel_in_one_dimension() {
        let id = ConstantCoefficients(SymMat::identity(1));
        let grid = free_space_box(1, 1.0, [0.0; 2], 4.0, 1e-10, 1.0 / 16.0).unwrap();
        let snaps = green_evolve(&id, &grid, [0.0; 2], &[1.0, 2.0, 4.0], Scheme::Explicit).unwrap();
        for s in &snaps {
            assert!((s.mass - 1.0).abs() < 1e-9);
            let dev = clt_deviation(s, 1.0, &SymMat::identity(1)).unwrap();
            let peak = homogenized_kernel(&SymMat::identity(1), s.time, [0.0; 2]);
            assert!(dev.sup / peak < 5e-3, "t = {} rel = {}", s.time, dev.sup / peak);
        }
    }

    #[test]
    fn torus_mass_settles_for_identity() {
        let id = ConstantCoefficients(SymMat::identity(2));
        let grid = Grid::torus(2, 5, 2).unwrap();
        let op = assemble_generator(&id, &grid).unwrap();
        let v = invariant_density_at(&op, [1.0, 1.0], 1e-6, 1.0, 1024.0, Scheme::Explicit).unwrap();
        assert!((v.m_y - 1.0).abs() < 1e-6);
        assert!(invariant_density_at(&op, [1.0, 1.0], 0.5, 1.0, 64.0, Scheme::Explicit).is_err());
    }

    #[test]
    fn envelope_fit_window_errors() {
        let id = ConstantCoefficients(SymMat::identity(1));
        let grid = Grid::centered_box(1, [0.0; 2], 10.0, 0.25).unwrap();
        let snaps = green_evolve(&id, &grid, [0.0; 2], &[1.0], Scheme::Explicit).unwrap();
        assert!(nash_aronson_fit(&snaps, 1.0, EnvelopeWidths::for_ellipticity(1.0, 1.0), 2.0).is_err());
        let fit = nash_aronson_fit(&snaps, 1.0, EnvelopeWidths::for_ellipticity(1.0, 1.0), 0.5).unwrap();
        assert!(fit.c > 0.0 && fit.c <= fit.big_c);
    }
}
