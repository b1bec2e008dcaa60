//! Quenched local CLT runs, the conserved functional `c[v₀]`, and the
//! multiscale flatness seminorm used as a weak-norm surrogate.

use serde::{Deserialize, Serialize};

use crate::adjoint::InvariantDensity;
use crate::error::{Error, Result};
use crate::field::Coefficients;
use crate::green::homogenized_kernel;
use crate::grid::Grid;
use crate::operator::assemble_generator;
use crate::parabolic::{Evolver, Scheme};
use crate::rate::{fit_rate, FitWindow, RateTable};
use crate::sym::SymMat;

/// Shapes of initial data with `|v₀(x)| ≤ M R^{−d} exp(−|x|²/R²)`-type decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianData {
    /// `M (4πR²)^{−d/2} exp(−|x|²/(4R²))`, the heat kernel at time `R²`.
    HeatKernel,
    /// `M R^{−d} exp(−|x|²/R²)`.
    SquaredExponential,
    /// `M R^{−d−1} x₁ exp(−|x|²/R²)`, which has zero mass.
    Odd,
}

impl GaussianData {
    pub fn value(&self, m_amp: f64, r: f64, dim: usize, x: [f64; 2]) -> f64 {
        let d = dim as f64;
        let r2 = x[0] * x[0] + x[1] * x[1];
        match self {
            GaussianData::HeatKernel => {
                m_amp * (4.0 * std::f64::consts::PI * r * r).powf(-d / 2.0) * (-r2 / (4.0 * r * r)).exp()
            }
            GaussianData::SquaredExponential => m_amp * r.powf(-d) * (-r2 / (r * r)).exp(),
            GaussianData::Odd => m_amp * r.powf(-d - 1.0) * x[0] * (-r2 / (r * r)).exp(),
        }
    }

    /// Time shift `s₀` with `v₀ ∝ P̄_I(s₀, ·)` for the identity.
    pub fn time_shift(&self, r: f64) -> f64 {
        match self {
            GaussianData::HeatKernel => r * r,
            GaussianData::SquaredExponential | GaussianData::Odd => r * r / 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltSetup {
    pub r: f64,
    pub m_amp: f64,
    pub data: GaussianData,
    pub center: [f64; 2],
    pub h: f64,
    pub times: Vec<f64>,
    pub abar: SymMat,
    /// Relative size of the Gaussian supersolution on the box boundary at the final time.
    pub truncation_tol: f64,
    /// Box half-width; `None` picks the smallest admissible one.
    pub half_width: Option<f64>,
    pub scheme: Scheme,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltRun {
    pub setup: CltSetup,
    pub grid: Grid,
    pub v0_mass: f64,
    pub v0_l1: f64,
    /// `c_t = Σ v(t,·) h^d` per time.
    pub c_t: Vec<f64>,
    /// `sup |v − c_t P̄(t + s₀, · − x₀)| / (M t^{−d/2})` per time.
    pub errors: Vec<f64>,
    pub rate: Option<RateTable>,
    pub gamma_fit: f64,
    /// Initial data on the grid.
    pub v0: Vec<f64>,
}

impl CltRun {
    /// `|c_{t_{k+1}} − c_{t_k}|`.
    pub fn c_increments(&self) -> Vec<f64> {
        self.c_t.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }
}

/// Half-width needed so that `t^{0}·exp(−|x|²/(4Λ(t+R²)))` drops below `tol` on the boundary.
pub fn clt_half_width(big_lambda: f64, r: f64, t_max: f64, tol: f64) -> f64 {
    (4.0 * big_lambda * (t_max + r * r) * (1.0 / tol).ln()).sqrt() + 2.0 * r
}

pub fn run_local_clt<C: Coefficients + ?Sized>(coeffs: &C, setup: &CltSetup) -> Result<CltRun> {
    let dim = coeffs.dim();
    if !(setup.r >= 1.0) {
        return Err(Error::Parameter(format!("data scale R = {} must be at least 1", setup.r)));
    }
    if !(setup.m_amp > 0.0) {
        return Err(Error::Parameter("amplitude M must be positive".into()));
    }
    let r2 = setup.r * setup.r;
    let t = &setup.times;
    if t.is_empty() || t[0] < r2 * (1.0 - 1e-12) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("times must increase and start at or after R^2".into()));
    }
    if !(setup.truncation_tol > 0.0 && setup.truncation_tol < 1.0) {
        return Err(Error::Parameter("truncation tolerance must lie in (0, 1)".into()));
    }
    let (_, big) = coeffs.ellipticity();
    let need = clt_half_width(big, setup.r, *t.last().unwrap(), setup.truncation_tol);
    let half = match setup.half_width {
        Some(w) if w < need => {
            return Err(Error::Domain(format!(
                "truncation box half-width {w} is below the required {need:.3}"
            )))
        }
        Some(w) => w,
        None => need,
    };
    let grid = Grid::centered_box(dim, setup.center, half, setup.h)?;
    let op = assemble_generator(coeffs, &grid)?;
    let v0 = grid.sample(|x| {
        let d = [x[0] - setup.center[0], if dim == 2 { x[1] - setup.center[1] } else { 0.0 }];
        setup.data.value(setup.m_amp, setup.r, dim, d)
    });
    let v0_mass = grid.integrate(&v0);
    let v0_l1 = grid.integrate(&v0.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let zero = |_: f64, _: [f64; 2]| 0.0;
    let mut ev = Evolver::new(&op, v0.clone(), setup.scheme)?.with_boundary(&zero);
    let s0 = setup.data.time_shift(setup.r);
    let mut c_t = Vec::with_capacity(t.len());
    let mut errors = Vec::with_capacity(t.len());
    for &ti in t {
        ev.advance_to(ti)?;
        let v = ev.state();
        let c = grid.integrate(v);
        let mut sup = 0.0f64;
        for (idx, &vi) in v.iter().enumerate() {
            let d = grid.displacement(grid.point(idx), setup.center);
            sup = sup.max((vi - c * homogenized_kernel(&setup.abar, ti + s0, d)).abs());
        }
        c_t.push(c);
        errors.push(sup / (setup.m_amp * ti.powf(-(dim as f64) / 2.0)));
    }
    let rows: Vec<(f64, f64)> = t.iter().zip(&errors).map(|(&ti, &e)| (ti / r2, e)).collect();
    let rate = fit_rate(&rows, FitWindow::TailHalf).ok();
    let gamma_fit = rate.as_ref().map_or(f64::NAN, |r| r.exponent);
    Ok(CltRun {
        setup: setup.clone(),
        grid,
        v0_mass,
        v0_l1,
        c_t,
        errors,
        rate,
        gamma_fit,
        v0,
    })
}

/// Tail value of `c_t` once its last increment is below `rtol` (relative to
/// `max(|c|, ‖v₀‖₁)`) and the increments decrease at the tail.
pub fn c_limit(run: &CltRun, rtol: f64) -> Result<f64> {
    let inc = run.c_increments();
    let last = *run.c_t.last().ok_or_else(|| Error::Domain("empty c_t table".into()))?;
    let scale = last.abs().max(run.v0_l1);
    let settled = match inc.as_slice() {
        [.., a, b] => (b <= a || *b <= 1e-13 * scale) && *b <= rtol * scale,
        [b] => *b <= rtol * scale,
        [] => false,
    };
    if settled {
        Ok(last)
    } else {
        Err(Error::NotSettled {
            what: "c_t".into(),
            history: inc,
        })
    }
}

/// `Σ v₀ · m · h^d` with `m` read at the torus node matching each grid node.
pub fn measure_pairing(grid: &Grid, v0: &[f64], m: &InvariantDensity) -> Result<f64> {
    if (grid.h - m.grid.h).abs() > 1e-12 * grid.h {
        return Err(Error::Domain("grid and measure use different mesh sizes".into()));
    }
    let mut acc = 0.0;
    for (idx, &v) in v0.iter().enumerate() {
        if v != 0.0 {
            acc += v * m.values[m.grid.nearest_node(grid.point(idx))?];
        }
    }
    Ok(acc * grid.cell_volume())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessProfile {
    pub alpha: f64,
    /// `3^{−kα} avg_z |⨍_{z+□_{−k}} (f − ⨍f)|` for `k = 0, 1, …`.
    pub terms: Vec<f64>,
    pub total: f64,
    /// `⨍ f` over the whole cube.
    pub mean: f64,
}

impl FlatnessProfile {
    /// `|⨍f| + Σ terms`, the surrogate for `‖f‖_{W^{−α,1}}`.
    pub fn weak_norm(&self) -> f64 {
        self.mean.abs() + self.total
    }
}

/// Multiscale flatness of the `n^d` block `values` (index `i + n j`), treating
/// every value as the average over its node cell.
pub fn flatness_block(values: &[f64], n: usize, dim: usize, alpha: f64) -> Result<FlatnessProfile> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    if values.len() != n.pow(dim as u32) {
        return Err(Error::Domain("block size does not match n^d".into()));
    }
    if n % 3 != 0 {
        return Err(Error::Domain(format!(
            "{n} nodes per side do not align with a triadic partition"
        )));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut terms = Vec::new();
    let mut side = n;
    let mut k = 0i32;
    loop {
        let cells = n / side;
        let per = (side.pow(dim as u32)) as f64;
        let mut acc = 0.0;
        let jn = if dim == 2 { cells } else { 1 };
        for cj in 0..jn {
            for ci in 0..cells {
                let mut s = 0.0;
                let jr = if dim == 2 { cj * side..(cj + 1) * side } else { 0..1 };
                for j in jr {
                    for i in ci * side..(ci + 1) * side {
                        s += values[i + n * j];
                    }
                }
                acc += (s / per - mean).abs();
            }
        }
        terms.push(3f64.powf(-(k as f64) * alpha) * acc / (cells.pow(dim as u32)) as f64);
        if side % 3 != 0 {
            break;
        }
        side /= 3;
        k += 1;
    }
    let total = terms.iter().sum();
    Ok(FlatnessProfile { alpha, terms, total, mean })
}

/// Flatness of a grid function over the whole (square) grid.
pub fn multiscale_flatness(f: &[f64], grid: &Grid, alpha: f64) -> Result<FlatnessProfile> {
    if grid.dim == 2 && grid.n[0] != grid.n[1] {
        return Err(Error::Domain("flatness needs a square grid".into()));
    }
    if f.len() != grid.len() {
        return Err(Error::Domain("grid function length does not match the grid".into()));
    }
    flatness_block(f, grid.n[0], grid.dim, alpha)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakNormRow {
    pub eps: f64,
    /// Weak norm of `m(·/ε) − 1`.
    pub m: f64,
    /// Weak norms of `(mA)_{ij}(·/ε) − ā_{ij}` for `(1,1)`, `(1,2)`, `(2,2)`.
    pub ma: Vec<f64>,
}

impl WeakNormRow {
    pub fn ma_max(&self) -> f64 {
        self.ma.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakNormReport {
    pub alpha: f64,
    pub rows: Vec<WeakNormRow>,
    /// Fits of `value ∝ (1/ε)^{−exponent}`; a positive exponent is decay as `ε → 0`.
    pub m_rate: RateTable,
    pub ma_rate: RateTable,
}

fn corner_block(values: &[f64], grid: &Grid, n: usize) -> Vec<f64> {
    let jn = if grid.dim == 2 { n } else { 1 };
    let mut out = Vec::with_capacity(n * jn);
    for j in 0..jn {
        for i in 0..n {
            out.push(values[grid.index(i, j)]);
        }
    }
    out
}

/// For each `ε = 3^{−k}` in the ladder restricts the torus measure to the
/// corner cube of side `1/ε` and evaluates the flatness surrogate of
/// `m − 1` and `mA − ā`. Rates are fitted against `1/ε`.
pub fn weak_norm_decay<C: Coefficients + ?Sized>(
    coeffs: &C,
    m: &InvariantDensity,
    abar: &SymMat,
    eps: &[f64],
    alpha: f64,
) -> Result<WeakNormReport> {
    let grid = &m.grid;
    let p = grid.period().ok_or_else(|| Error::Domain("weak norm decay needs a torus measure".into()))?;
    let dim = grid.dim;
    let pairs: Vec<(usize, usize)> = if dim == 2 { vec![(0, 0), (0, 1), (1, 1)] } else { vec![(0, 0)] };
    let ma_fields: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(i, j)| {
            (0..grid.len())
                .map(|k| m.values[k] * coeffs.coeff(grid.point(k)).get(i, j) - abar.get(i, j))
                .collect()
        })
        .collect();
    let m_minus: Vec<f64> = m.values.iter().map(|v| v - 1.0).collect();
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let side = 1.0 / e;
        let n = (side / grid.h).round() as usize;
        if side > p[0] + 1e-9 || ((n as f64) * grid.h - side).abs() > 1e-9 * side {
            return Err(Error::Domain(format!(
                "cube of side {side} does not fit the torus of period {} at h = {}",
                p[0], grid.h
            )));
        }
        let mv = flatness_block(&corner_block(&m_minus, grid, n), n, dim, alpha)?.weak_norm();
        let ma = ma_fields
            .iter()
            .map(|f| Ok(flatness_block(&corner_block(f, grid, n), n, dim, alpha)?.weak_norm()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(WeakNormRow { eps: e, m: mv, ma });
    }
    let pos = |v: f64| v.max(f64::MIN_POSITIVE);
    let m_rate = fit_rate(
        &rows.iter().map(|r| (1.0 / r.eps, pos(r.m))).collect::<Vec<_>>(),
        FitWindow::All,
    )?;
    let ma_rate = fit_rate(
        &rows.iter().map(|r| (1.0 / r.eps, pos(r.ma_max()))).collect::<Vec<_>>(),
        FitWindow::All,
    )?;
    Ok(WeakNormReport {
        alpha,
        rows,
        m_rate,
        ma_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantCoefficients;

    #[test]
    fn flatness_of_constant_and_half_indicator() {
        let n = 9;
        let c = vec![2.0; n * n];
        let p = flatness_block(&c, n, 2, 0.5).unwrap();
        assert_eq!(p.total, 0.0);
        assert_eq!(p.terms.len(), 3);
        // Left half of a 6-wide block (columns 0..3) minus 1/2: level one has
        // 3×3 cells of side 2; column 0 means +1/2, column 1 means 0, column 2 means −1/2.
        let n = 6;
        let f: Vec<f64> = (0..n * n).map(|k| if k % n < 3 { 0.5 } else { -0.5 }).collect();
        let p = flatness_block(&f, n, 2, 0.5).unwrap();
        assert_eq!(p.terms[0], 0.0);
        assert!((p.terms[1] - 3f64.powf(-0.5) / 3.0).abs() < 1e-15);
        assert!(flatness_block(&f[..16], 4, 2, 0.5).is_err());
    }

    #[test]
    fn identity_clt_is_exact_up_to_discretization() {
        let setup = CltSetup {
            r: 1.0,
            m_amp: 1.0,
            data: GaussianData::HeatKernel,
            center: [0.0; 2],
            h: 0.125,
            times: vec![1.0, 2.0, 4.0],
            abar: SymMat::identity(1),
            truncation_tol: 1e-12,
            half_width: None,
            scheme: Scheme::Explicit,
        };
        let run = run_local_clt(&ConstantCoefficients(SymMat::identity(1)), &setup).unwrap();
        assert!(run.c_t.iter().all(|c| (c - 1.0).abs() < 1e-9));
        assert!(run.errors.iter().all(|&e| e < 1e-3), "{:?}", run.errors);
        let mut small = setup.clone();
        small.half_width = Some(2.0);
        assert!(matches!(run_local_clt(&ConstantCoefficients(SymMat::identity(1)), &small), Err(Error::Domain(_))));
    }

    #[test]
    fn odd_data_has_zero_mass() {
        let setup = CltSetup {
            r: 1.0,
            m_amp: 1.0,
            data: GaussianData::Odd,
            center: [0.0; 2],
            h: 0.25,
            times: (0..7).map(|k| 2f64.powi(k)).collect(),
            abar: SymMat::identity(1),
            truncation_tol: 1e-8,
            half_width: None,
            scheme: Scheme::Explicit,
        };
        let run = run_local_clt(&ConstantCoefficients(SymMat::identity(1)), &setup).unwrap();
        assert!(run.c_t.iter().all(|c| c.abs() < 1e-12));
        assert!(c_limit(&run, 1e-6).unwrap().abs() < 1e-12);
        assert!(run.gamma_fit > 0.3, "{}", run.gamma_fit);
    }
}
