//! Time stepping for `∂ₜu = L_h u` with Dirichlet or periodic boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operator::{Boundary, GridOperator};
use crate::solver::{bicgstab, CsrMatrix, SolveOptions};

/// Fraction of the stability bound used by default for explicit steps.
pub const CFL_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    /// Forward Euler at `CFL_SAFETY` times the stability bound.
    Explicit,
    /// Backward Euler with the given target step.
    Implicit { dt: f64 },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Explicit
    }
}

/// One forward Euler step `u + dt·L_h u`; rejects steps above the stability bound.
pub fn parabolic_step(op: &GridOperator, u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let bound = op.explicit_dt_bound();
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, bound });
    }
    let lu = op.apply(u);
    Ok(u.iter().zip(&lu).map(|(a, b)| a + dt * b).collect())
}

/// Boundary data `g(t, x)` on Dirichlet nodes.
pub type BoundaryData<'a> = &'a (dyn Fn(f64, [f64; 2]) -> f64 + Sync);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParabolicRun {
    /// Largest step actually taken.
    pub dt: f64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
    /// `dt · max|diag L_h|`; at most one for explicit runs.
    pub cfl_ratio: f64,
}

/// Incremental solver state for one Cauchy(-Dirichlet) problem.
pub struct Evolver<'a> {
    op: &'a GridOperator,
    scheme: Scheme,
    u: Vec<f64>,
    time: f64,
    steps: usize,
    max_dt: f64,
    boundary: Option<BoundaryData<'a>>,
    implicit: Option<(f64, CsrMatrix)>,
    scratch: Vec<f64>,
}

impl<'a> Evolver<'a> {
    pub fn new(op: &'a GridOperator, u0: Vec<f64>, scheme: Scheme) -> Result<Self> {
        if u0.len() != op.len() {
            return Err(Error::Domain(format!(
                "initial data has {} values, grid has {} nodes",
                u0.len(),
                op.len()
            )));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite initial data".into()));
        }
        if let Scheme::Implicit { dt } = scheme {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Parameter(format!("implicit step dt = {dt} must be positive")));
            }
        }
        let n = u0.len();
        Ok(Self {
            op,
            scheme,
            u: u0,
            time: 0.0,
            steps: 0,
            max_dt: 0.0,
            boundary: None,
            implicit: None,
            scratch: vec![0.0; n],
        })
    }

    pub fn with_boundary(mut self, g: BoundaryData<'a>) -> Self {
        self.boundary = Some(g);
        self.apply_boundary(0.0);
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn max_dt(&self) -> f64 {
        self.max_dt
    }

    pub fn state(&self) -> &[f64] {
        &self.u
    }

    pub fn into_state(self) -> Vec<f64> {
        self.u
    }

    fn apply_boundary(&mut self, t: f64) {
        if let (Some(g), Boundary::Dirichlet) = (self.boundary, self.op.boundary) {
            let grid = &self.op.grid;
            for idx in 0..grid.len() {
                if grid.is_boundary(idx) {
                    self.u[idx] = g(t, grid.point(idx));
                }
            }
        }
    }

    fn explicit_step(&mut self, dt: f64) {
        self.op.apply_into(&self.u, &mut self.scratch);
        #[cfg(debug_assertions)]
        let (lo, hi) = self
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for (ui, li) in self.u.iter_mut().zip(&self.scratch) {
            *ui += dt * li;
        }
        #[cfg(debug_assertions)]
        if self.boundary.is_none() {
            let tol = 1e-9 * (hi.abs() + lo.abs() + 1e-300);
            debug_assert!(self.u.iter().all(|&v| v >= lo - tol && v <= hi + tol));
        }
    }

    fn implicit_matrix(&mut self, dt: f64) -> &CsrMatrix {
        let stale = self.implicit.as_ref().map_or(true, |(d, _)| *d != dt);
        if stale {
            let grid = &self.op.grid;
            let rows = (0..grid.len())
                .map(|r| {
                    if grid.is_boundary(r) {
                        vec![(r, 1.0)]
                    } else {
                        let mut row: Vec<(usize, f64)> =
                            self.op.matrix.row(r).map(|(c, v)| (c, -dt * v)).collect();
                        row.push((r, 1.0));
                        row
                    }
                })
                .collect();
            self.implicit = Some((dt, CsrMatrix::from_rows(grid.len(), rows)));
        }
        &self.implicit.as_ref().unwrap().1
    }

    fn implicit_step(&mut self, dt: f64) -> Result<()> {
        let t_next = self.time + dt;
        let mut rhs = self.u.clone();
        if let (Some(g), Boundary::Dirichlet) = (self.boundary, self.op.boundary) {
            let grid = &self.op.grid;
            for (idx, r) in rhs.iter_mut().enumerate() {
                if grid.is_boundary(idx) {
                    *r = g(t_next, grid.point(idx));
                }
            }
        }
        let guess = self.u.clone();
        let m = self.implicit_matrix(dt);
        let rep = bicgstab(
            m,
            &rhs,
            Some(&guess),
            SolveOptions {
                rtol: 1e-12,
                ..SolveOptions::default()
            },
        )?;
        self.u = rep.x;
        Ok(())
    }

    /// Advances to time `t` with equal steps no larger than the scheme's step.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let span = t - self.time;
        if span < 0.0 {
            return Err(Error::Parameter(format!(
                "requested time {t} precedes current time {}",
                self.time
            )));
        }
        if span == 0.0 {
            return Ok(());
        }
        let target = match self.scheme {
            Scheme::Explicit => CFL_SAFETY * self.op.explicit_dt_bound(),
            Scheme::Implicit { dt } => dt,
        };
        let n = (span / target).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        if let Scheme::Explicit = self.scheme {
            let bound = self.op.explicit_dt_bound();
            if dt > bound * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt, bound });
            }
        }
        let t0 = self.time;
        for k in 0..n {
            match self.scheme {
                Scheme::Explicit => {
                    self.explicit_step(dt);
                    self.apply_boundary(t0 + (k + 1) as f64 * dt);
                }
                Scheme::Implicit { .. } => {
                    self.time = t0 + k as f64 * dt;
                    self.implicit_step(dt)?;
                }
            }
            self.steps += 1;
        }
        self.time = t;
        self.max_dt = self.max_dt.max(dt);
        if self.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("solution became non-finite".into()));
        }
        Ok(())
    }
}

/// Solves `∂ₜu = L_h u`, `u(0) = u0`, `u = g` on Dirichlet nodes, up to `t_final`,
/// recording snapshots at the requested (increasing) times.
pub fn solve_cauchy_dirichlet(
    op: &GridOperator,
    u0: &[f64],
    g: Option<BoundaryData<'_>>,
    t_final: f64,
    snapshot_times: &[f64],
    scheme: Scheme,
) -> Result<ParabolicRun> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Parameter(format!("final time {t_final} must be positive")));
    }
    let mut times: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t < t_final).collect();
    if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|&t| t <= 0.0) {
        return Err(Error::Parameter("snapshot times must be positive and strictly increasing".into()));
    }
    times.push(t_final);
    let mut ev = Evolver::new(op, u0.to_vec(), scheme)?;
    if let Some(g) = g {
        if g(0.0, op.grid.point(0)).is_nan() {
            return Err(Error::Domain("non-finite boundary data".into()));
        }
        ev = ev.with_boundary(g);
    }
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in &times {
        ev.advance_to(t)?;
        snapshots.push(Snapshot {
            time: t,
            values: ev.state().to_vec(),
        });
    }
    let cfl_ratio = ev.max_dt() * op.max_abs_diagonal();
    Ok(ParabolicRun {
        dt: ev.max_dt(),
        steps: ev.steps(),
        snapshots,
        cfl_ratio,
    })
}

/// Role certified for `t^{−κ} exp(−|x|²/(θt))` by the parameter ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeRole {
    Supersolution,
    Subsolution,
    Uncertified,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeValue {
    pub value: f64,
    pub role: EnvelopeRole,
}

/// Gaussian barrier `t^{−κ} exp(−|x|²/(θt))` for operators with ellipticity `(λ, Λ)`.
///
/// It is a supersolution when `θ ≥ 4Λ` and `0 ≤ κ ≤ 2λd/θ`, and a
/// subsolution when `θ ≤ 4λ` and `κ ≥ 2Λd/θ`.
pub fn supersolution_envelope(
    kappa: f64,
    theta: f64,
    t: f64,
    x: [f64; 2],
    dim: usize,
    lambda: f64,
    big_lambda: f64,
) -> Result<EnvelopeValue> {
    if !(t > 0.0) || !(theta > 0.0) {
        return Err(Error::Parameter(format!("need t > 0 and theta > 0 (t = {t}, theta = {theta})")));
    }
    let r2 = x[0] * x[0] + if dim == 2 { x[1] * x[1] } else { 0.0 };
    let value = t.powf(-kappa) * (-r2 / (theta * t)).exp();
    let d = dim as f64;
    let role = if theta >= 4.0 * big_lambda && kappa >= 0.0 && kappa <= 2.0 * lambda * d / theta {
        EnvelopeRole::Supersolution
    } else if theta <= 4.0 * lambda && kappa >= 2.0 * big_lambda * d / theta {
        EnvelopeRole::Subsolution
    } else {
        EnvelopeRole::Uncertified
    };
    Ok(EnvelopeValue { value, role })
}

/// Node-index box `lo..=hi` (inclusive) used to restrict grid functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl IndexBox {
    /// Nodes whose coordinates lie in the ball `B(center, r)` are bounded by this box.
    pub fn around(grid: &Grid, center: usize, radius_nodes: usize) -> IndexBox {
        let [i, j] = grid.coords(center);
        let lo = [i.saturating_sub(radius_nodes), j.saturating_sub(radius_nodes)];
        let hi = [
            (i + radius_nodes).min(grid.n[0] - 1),
            (j + radius_nodes).min(grid.n[1] - 1),
        ];
        IndexBox { lo, hi }
    }

    pub fn full(grid: &Grid) -> IndexBox {
        IndexBox {
            lo: [0, 0],
            hi: [grid.n[0] - 1, grid.n[1] - 1],
        }
    }
}

/// `max |u(x) − u(y)| / |x − y|^σ` over a deterministic pattern of pairs in the
/// region: every node paired with the nodes at axis and diagonal offsets
/// `2^k` (k = 0, 1, …) that stay in the region.
pub fn holder_seminorm(u: &[f64], grid: &Grid, region: IndexBox, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::Parameter(format!("sigma = {sigma} must lie in (0, 1]")));
    }
    let dims = if grid.dim == 2 { 2 } else { 1 };
    for k in 0..dims {
        if region.lo[k] > region.hi[k] || region.hi[k] >= grid.n[k] {
            return Err(Error::Domain("empty or out-of-grid region".into()));
        }
    }
    let width = [
        region.hi[0] - region.lo[0],
        if dims == 2 { region.hi[1] - region.lo[1] } else { 0 },
    ];
    if width[0] == 0 && width[1] == 0 {
        return Err(Error::Domain("region contains a single node".into()));
    }
    let max_w = width[0].max(width[1]);
    let mut offsets: Vec<(usize, usize)> = Vec::new();
    let mut s = 1usize;
    while s <= max_w {
        offsets.push((s, 0));
        if dims == 2 {
            offsets.push((0, s));
            offsets.push((s, s));
        }
        s *= 2;
    }
    let mut best = 0.0f64;
    let jr = if dims == 2 { region.lo[1]..=region.hi[1] } else { 0..=0 };
    for j in jr {
        for i in region.lo[0]..=region.hi[0] {
            let a = u[grid.index(i, j)];
            for &(di, dj) in &offsets {
                let (i2, j2) = (i + di, j + dj);
                if i2 > region.hi[0] || (dims == 2 && j2 > region.hi[1]) {
                    continue;
                }
                let b = u[grid.index(i2, j2)];
                let dist = grid.h * ((di * di + dj * dj) as f64).sqrt();
                best = best.max((a - b).abs() / dist.powf(sigma));
            }
            // Anti-diagonal pairs.
            if dims == 2 {
                for &(di, dj) in offsets.iter().filter(|o| o.0 == o.1) {
                    if i < di || j + dj > region.hi[1] || i - di < region.lo[0] {
                        continue;
                    }
                    let b = u[grid.index(i - di, j + dj)];
                    let dist = grid.h * ((2 * di * di) as f64).sqrt();
                    best = best.max((a - b).abs() / dist.powf(sigma));
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantCoefficients;
    use crate::operator::assemble_generator;
    use crate::sym::SymMat;

    fn laplace_box(n: usize, h: f64) -> GridOperator {
        let g = Grid::boxed(2, [0.0; 2], h, n).unwrap();
        assemble_generator(&ConstantCoefficients(SymMat::identity(2)), &g).unwrap()
    }

    #[test]
    fn constants_are_preserved() {
        let op = laplace_box(9, 0.25);
        let u = vec![3.5; op.len()];
        let v = parabolic_step(&op, &u, 0.9 * op.explicit_dt_bound()).unwrap();
        assert!(v.iter().all(|&x| (x - 3.5).abs() < 1e-13));
    }

    #[test]
    fn single_spike_spreads_and_conserves_sum() {
        let op = laplace_box(9, 0.25);
        let c = op.grid.index(4, 4);
        let mut u = vec![0.0; op.len()];
        u[c] = 1.0;
        let dt = 0.2 * op.explicit_dt_bound();
        let v = parabolic_step(&op, &u, dt).unwrap();
        let sum: f64 = v.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
        let w = dt / (op.grid.h * op.grid.h);
        assert!((v[c] - (1.0 - 4.0 * w)).abs() < 1e-14);
        assert!((v[op.grid.index(5, 4)] - w).abs() < 1e-14);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let op = laplace_box(9, 0.25);
        let u = vec![0.0; op.len()];
        let bound = op.explicit_dt_bound();
        match parabolic_step(&op, &u, 1.5 * bound) {
            Err(Error::Cfl { bound: b, .. }) => assert!((b - bound).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let op = laplace_box(9, 0.25);
        let zero = |_: f64, _: [f64; 2]| 0.0;
        let run = solve_cauchy_dirichlet(&op, &vec![0.0; op.len()], Some(&zero), 1.0, &[0.5], Scheme::Explicit)
            .unwrap();
        assert_eq!(run.snapshots.len(), 2);
        assert!(run.snapshots.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
        assert!(run.cfl_ratio <= 1.0);
    }

    #[test]
    fn sine_mode_decays_by_the_discrete_factors() {
        let op = laplace_box(17, 1.0 / 16.0);
        let pi = std::f64::consts::PI;
        let u0 = op.grid.sample(|x| (pi * x[0]).sin() * (pi * x[1]).sin());
        let zero = |_: f64, _: [f64; 2]| 0.0;
        let lam = 2.0 * (2.0 - 2.0 * (pi / 16.0).cos()) * 256.0;
        let c = op.grid.index(8, 8);
        let e = solve_cauchy_dirichlet(&op, &u0, Some(&zero), 0.05, &[], Scheme::Explicit).unwrap();
        let fe = (1.0 - lam * e.dt).powi(e.steps as i32);
        assert!((e.snapshots[0].values[c] - fe).abs() < 1e-12);
        let i = solve_cauchy_dirichlet(&op, &u0, Some(&zero), 0.05, &[], Scheme::Implicit { dt: 1e-4 })
            .unwrap();
        let fi = (1.0 + lam * i.dt).powi(-(i.steps as i32));
        assert!((i.snapshots[0].values[c] - fi).abs() < 1e-9);
        assert!((fe - (-lam * 0.05f64).exp()).abs() < 1e-2);
        assert!((fi - (-lam * 0.05f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn envelope_roles() {
        let sup = supersolution_envelope(0.0, 8.0, 2.0, [1.0, 1.0], 2, 1.0, 2.0).unwrap();
        assert_eq!(sup.role, EnvelopeRole::Supersolution);
        assert!((sup.value - (-2.0f64 / 16.0).exp()).abs() < 1e-15);
        let at0 = supersolution_envelope(0.5, 8.0, 4.0, [0.0, 0.0], 2, 1.0, 2.0).unwrap();
        assert!((at0.value - 0.5).abs() < 1e-15);
        let sub = supersolution_envelope(2.0, 4.0, 1.0, [0.0, 0.0], 2, 1.0, 2.0).unwrap();
        assert_eq!(sub.role, EnvelopeRole::Subsolution);
        let none = supersolution_envelope(0.1, 5.0, 1.0, [0.0, 0.0], 2, 1.0, 2.0).unwrap();
        assert_eq!(none.role, EnvelopeRole::Uncertified);
    }

    #[test]
    fn holder_seminorm_of_simple_functions() {
        let g = Grid::unit_box(2, 16).unwrap();
        let c = vec![2.0; g.len()];
        assert_eq!(holder_seminorm(&c, &g, IndexBox::full(&g), 0.5).unwrap(), 0.0);
        let lin = g.sample(|x| x[0]);
        let s = holder_seminorm(&lin, &g, IndexBox::full(&g), 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let bad = IndexBox { lo: [3, 3], hi: [3, 3] };
        assert!(holder_seminorm(&lin, &g, bad, 1.0).is_err());
    }
}
