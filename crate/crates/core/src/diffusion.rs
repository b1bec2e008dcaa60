//! Euler–Maruyama paths of `dX = σ(X) dW`, `σ = √(2A)`, and the environment
//! seen from the particle.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Coefficients;
use crate::rng::{domain, StreamId};
use crate::sym::SymMat;

pub const DEFAULT_DT: f64 = 0.01;
pub const MIN_ENSEMBLE: usize = 1000;

/// The symmetric positive definite square root of `2A`.
pub fn matrix_sqrt_spd(a: &SymMat) -> Result<SymMat> {
    if !a.is_spd() {
        return Err(Error::Parameter(format!("{a:?} is not symmetric positive definite")));
    }
    a.scale(2.0)
        .sqrt_spd()
        .ok_or_else(|| Error::Parameter(format!("no square root for {a:?}")))
}

/// Path functionals recorded when the path reaches a checkpoint time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    /// `(1/t)∫₀ᵗ A(X_s) ds` by left-endpoint quadrature.
    pub time_average: SymMat,
    pub x: [f64; 2],
    pub max_abs: f64,
}

/// Stream of path `index` under ensemble seed `seed`.
pub fn path_stream(seed: u64, index: u64) -> StreamId {
    StreamId::new(seed, domain::PATH, [index as i64, 0])
}

/// Simulates one path from the origin and records the functionals at each checkpoint.
pub fn simulate_path<C: Coefficients + ?Sized>(
    coeffs: &C,
    dt: f64,
    checkpoints: &[f64],
    stream: StreamId,
) -> Result<Vec<Checkpoint>> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::Parameter(format!("dt = {dt} must lie in (0, 0.1]")));
    }
    if checkpoints.is_empty() || checkpoints[0] <= 0.0 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("checkpoints must be positive and increasing".into()));
    }
    let dim = coeffs.dim();
    let steps: Vec<u64> = checkpoints.iter().map(|t| (t / dt).round() as u64).collect();
    if let Some(t) = checkpoints.iter().find(|&&t| ((t / dt).round() * dt - t).abs() > 1e-9 * t) {
        return Err(Error::Parameter(format!("checkpoint {t} is not a multiple of dt = {dt}")));
    }
    let mut rng = stream.rng();
    let sdt = dt.sqrt();
    let mut x = [0.0f64; 2];
    let mut acc = SymMat::zero(dim);
    let mut max_abs = 0.0f64;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    let last = *steps.last().unwrap();
    for k in 1..=last {
        let a = coeffs.coeff(x);
        acc = acc.add(&a);
        let s = a
            .scale(2.0)
            .sqrt_spd()
            .ok_or_else(|| Error::Domain(format!("coefficient at {x:?} is not positive definite")))?;
        let xi: [f64; 2] = [
            StandardNormal.sample(&mut rng),
            if dim == 2 { StandardNormal.sample(&mut rng) } else { 0.0 },
        ];
        let inc = s.apply(xi);
        x[0] += sdt * inc[0];
        if dim == 2 {
            x[1] += sdt * inc[1];
        }
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::Domain("path became non-finite".into()));
        }
        max_abs = max_abs.max((x[0] * x[0] + x[1] * x[1]).sqrt());
        if k == steps[next] {
            out.push(Checkpoint {
                t: checkpoints[next],
                time_average: acc.scale(1.0 / k as f64),
                x,
                max_abs,
            });
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub checkpoints: Vec<f64>,
    /// `paths[p][k]`: path `p` at checkpoint `k`.
    pub paths: Vec<Vec<Checkpoint>>,
}

pub fn simulate_ensemble<C: Coefficients + ?Sized>(
    coeffs: &C,
    n_paths: usize,
    dt: f64,
    checkpoints: &[f64],
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::Parameter("an ensemble needs at least one path".into()));
    }
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| simulate_path(coeffs, dt, checkpoints, path_stream(seed, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        seed,
        n_paths,
        dt,
        checkpoints: checkpoints.to_vec(),
        paths,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub times: Vec<f64>,
    pub etas: Vec<f64>,
    /// `tails[k][e] = P[|avg_T − ā| ≥ η_e]` at `T = times[k]` (Frobenius distance).
    pub tails: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    /// Ensemble mean of `X_T` and its standard error per time.
    pub endpoint_mean: Vec<[f64; 2]>,
    pub endpoint_se: Vec<[f64; 2]>,
    /// Least-squares slope of `ln P` against `η² T^{1−ξ}` over tails in (0, 1).
    pub concentration_slope: f64,
    pub xi: f64,
    pub n_paths: usize,
    pub low_n_paths: bool,
    /// Every time average had eigenvalues in `[λ, Λ]`.
    pub sandwich_holds: bool,
}

impl ErgodicityReport {
    pub fn medians_decreasing(&self) -> bool {
        self.medians.windows(2).all(|w| w[1] < w[0])
    }

    pub fn tails_nonincreasing_in_eta(&self) -> bool {
        self.tails.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }

    /// Largest `|mean|/se` over times and components.
    pub fn endpoint_z(&self) -> f64 {
        let mut z = 0.0f64;
        for (m, s) in self.endpoint_mean.iter().zip(&self.endpoint_se) {
            for k in 0..2 {
                if s[k] > 0.0 {
                    z = z.max(m[k].abs() / s[k]);
                } else if m[k] != 0.0 {
                    z = f64::INFINITY;
                }
            }
        }
        z
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Tails of the time-averaged environment around `ā` from one ensemble
/// evaluated at every time of the ladder.
pub fn ergodicity_from_ensemble<C: Coefficients + ?Sized>(
    coeffs: &C,
    ens: &PathEnsemble,
    etas: &[f64],
    abar: &SymMat,
    xi: f64,
) -> Result<ErgodicityReport> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::Parameter(format!("xi = {xi} must lie in (0, 1)")));
    }
    if etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("eta grid must be increasing".into()));
    }
    let (lam, big) = coeffs.ellipticity();
    let mut tails = Vec::new();
    let mut medians = Vec::new();
    let mut endpoint_mean = Vec::new();
    let mut endpoint_se = Vec::new();
    let mut sandwich_holds = true;
    let mut fit_pts = Vec::new();
    for (k, &t) in ens.checkpoints.iter().enumerate() {
        let devs: Vec<f64> = ens.paths.iter().map(|p| p[k].time_average.sub(abar).frobenius()).collect();
        for p in &ens.paths {
            let (e1, e2) = p[k].time_average.eigenvalues();
            let tol = 1e-12 * big;
            if e1 < lam - tol || e2 > big + tol {
                sandwich_holds = false;
            }
        }
        let n = devs.len() as f64;
        let row: Vec<f64> = etas
            .iter()
            .map(|&eta| devs.iter().filter(|&&d| d >= eta).count() as f64 / n)
            .collect();
        for (&eta, &p) in etas.iter().zip(&row) {
            if p > 0.0 && p < 1.0 {
                fit_pts.push((eta * eta * t.powf(1.0 - xi), p.ln()));
            }
        }
        tails.push(row);
        medians.push(median(devs));
        let (m0, s0) = mean_and_se(ens.paths.iter().map(|p| p[k].x[0]));
        let (m1, s1) = mean_and_se(ens.paths.iter().map(|p| p[k].x[1]));
        endpoint_mean.push([m0, m1]);
        endpoint_se.push([s0, s1]);
    }
    let concentration_slope = if fit_pts.len() >= 2 {
        let n = fit_pts.len() as f64;
        let mx = fit_pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = fit_pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = fit_pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit_pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(ErgodicityReport {
        times: ens.checkpoints.clone(),
        etas: etas.to_vec(),
        tails,
        medians,
        endpoint_mean,
        endpoint_se,
        concentration_slope,
        xi,
        n_paths: ens.n_paths,
        low_n_paths: ens.n_paths < MIN_ENSEMBLE,
        sandwich_holds,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn ergodicity_experiment<C: Coefficients + ?Sized>(
    coeffs: &C,
    n_paths: usize,
    times: &[f64],
    etas: &[f64],
    abar: &SymMat,
    dt: f64,
    seed: u64,
    xi: f64,
) -> Result<ErgodicityReport> {
    let ens = simulate_ensemble(coeffs, n_paths, dt, times, seed)?;
    ergodicity_from_ensemble(coeffs, &ens, etas, abar, xi)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub t: f64,
    /// Empirical `E[X_T X_Tᵀ]/T`.
    pub covariance: SymMat,
    pub target: SymMat,
    pub std_error: SymMat,
    /// Largest `|cov − 2ā|/se` over entries.
    pub max_z: f64,
    /// Kolmogorov–Smirnov distance of `X_T¹/√(T cov₁₁)` to the standard normal.
    pub ks_statistic: f64,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn invariance_from_ensemble(ens: &PathEnsemble, abar: &SymMat) -> Result<InvarianceReport> {
    let k = ens.checkpoints.len() - 1;
    let t = ens.checkpoints[k];
    let dim = abar.dim;
    let target = abar.scale(2.0);
    let mut covariance = SymMat::zero(dim);
    let mut std_error = SymMat::zero(dim);
    let mut max_z = 0.0f64;
    for i in 0..dim {
        for j in i..dim {
            let (m, se) = mean_and_se(ens.paths.iter().map(|p| p[k].x[i] * p[k].x[j] / t));
            covariance.set(i, j, m);
            std_error.set(i, j, se);
            let z = (m - target.get(i, j)).abs() / se.max(1e-300);
            max_z = max_z.max(z);
        }
    }
    let s = covariance.get(0, 0).sqrt();
    let mut z: Vec<f64> = ens.paths.iter().map(|p| p[k].x[0] / (t.sqrt() * s)).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let n = z.len() as f64;
    let ks_statistic = z
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(InvarianceReport {
        t,
        covariance,
        target,
        std_error,
        max_z,
        ks_statistic,
    })
}

pub fn invariance_principle_check<C: Coefficients + ?Sized>(
    coeffs: &C,
    n_paths: usize,
    t: f64,
    abar: &SymMat,
    dt: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    let ens = simulate_ensemble(coeffs, n_paths, dt, &[t], seed)?;
    invariance_from_ensemble(&ens, abar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantCoefficients;

    #[test]
    fn square_roots() {
        let s = matrix_sqrt_spd(&SymMat::identity(2)).unwrap();
        assert!((s.a11 - 2f64.sqrt()).abs() < 1e-15 && s.a12 == 0.0);
        let s = matrix_sqrt_spd(&SymMat::diag(2, 2.0, 0.5)).unwrap();
        assert!((s.a11 - 2.0).abs() < 1e-15 && (s.a22 - 1.0).abs() < 1e-15);
        let a = SymMat::new2(1.7, -0.4, 1.1);
        let s = matrix_sqrt_spd(&a).unwrap();
        let p = s.mul(&s);
        assert!((p[0][0] / 2.0 - a.a11).abs() < 1e-12 && (p[0][1] / 2.0 - a.a12).abs() < 1e-12);
        assert!(matrix_sqrt_spd(&SymMat::new2(1.0, 2.0, 1.0)).is_err());
    }

    #[test]
    fn identity_paths_are_deterministic_and_flat() {
        let id = ConstantCoefficients(SymMat::identity(2));
        let a = simulate_path(&id, 0.01, &[1.0, 2.0], path_stream(3, 7)).unwrap();
        let b = simulate_path(&id, 0.01, &[1.0, 2.0], path_stream(3, 7)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|c| c.time_average == SymMat::identity(2)));
        let c = simulate_path(&id, 0.01, &[1.0, 2.0], path_stream(3, 8)).unwrap();
        assert_ne!(a[1].x, c[1].x);
        assert!(simulate_path(&id, 0.5, &[1.0], path_stream(3, 7)).is_err());
        assert!(simulate_path(&id, 0.03, &[1.0], path_stream(3, 7)).is_err());
    }

    #[test]
    fn identity_ensemble_has_zero_deviation() {
        let id = ConstantCoefficients(SymMat::identity(1));
        let r = ergodicity_experiment(&id, 50, &[1.0, 2.0], &[0.01, 0.1], &SymMat::identity(1), 0.01, 1, 0.5)
            .unwrap();
        assert!(r.medians.iter().all(|&m| m == 0.0));
        assert!(r.tails.iter().flatten().all(|&p| p == 0.0));
        assert!(r.low_n_paths && r.sandwich_holds);
    }
}
