//! Algebraic rate fits on `(scale, value)` tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which rows of a table enter the regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitWindow {
    All,
    /// The last `⌈n/2⌉` rows.
    TailHalf,
    /// Rows `start..end` (end exclusive).
    Range { start: usize, end: usize },
}

impl FitWindow {
    fn bounds(&self, n: usize) -> (usize, usize) {
        match *self {
            FitWindow::All => (0, n),
            FitWindow::TailHalf => (n - n.div_ceil(2), n),
            FitWindow::Range { start, end } => (start.min(n), end.min(n)),
        }
    }
}

/// Rows `(scale, value)` with the fitted decay exponent `value ∝ scale^{−exponent}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<(f64, f64)>,
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub window: FitWindow,
}

/// Least-squares fit of `log value` against `log scale` over the window;
/// the exponent is minus the slope.
pub fn fit_rate(rows: &[(f64, f64)], window: FitWindow) -> Result<RateTable> {
    let scales: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let increasing = scales.windows(2).all(|w| w[1] > w[0]);
    let decreasing = scales.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::Domain("scales must be strictly monotone".into()));
    }
    let (s, e) = window.bounds(rows.len());
    if e < s + 3 {
        return Err(Error::Domain(format!(
            "rate fit needs at least 3 rows in the window, got {}",
            e.saturating_sub(s)
        )));
    }
    let win = &rows[s..e];
    if let Some(bad) = win.iter().find(|r| !(r.0 > 0.0 && r.1 > 0.0)) {
        return Err(Error::Domain(format!(
            "rate fit needs positive scales and values, found {bad:?}"
        )));
    }
    let n = win.len() as f64;
    let xs: Vec<f64> = win.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = win.iter().map(|r| r.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 1e-30 * (1.0 + my * my) {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateTable {
        rows: rows.to_vec(),
        exponent: -slope,
        prefactor: intercept.exp(),
        r_squared,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, StreamId};

    #[test]
    fn exact_power_law() {
        let t = fit_rate(&[(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)], FitWindow::All).unwrap();
        assert!((t.exponent - 1.0).abs() < 1e-14);
        assert!((t.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_rows() {
        let t = fit_rate(&[(1.0, 3.0), (2.0, 3.0), (4.0, 3.0), (8.0, 3.0)], FitWindow::All).unwrap();
        assert!(t.exponent.abs() < 1e-14);
    }

    #[test]
    fn noisy_square_root_decay() {
        let s = StreamId::new(5, domain::PATH, [0, 0]);
        let rows: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let t = 2f64.powi(k);
                let noise = 1.0 + 0.01 * (2.0 * s.uniform(k as u64) - 1.0);
                (t, t.powf(-0.5) * noise)
            })
            .collect();
        let t = fit_rate(&rows, FitWindow::All).unwrap();
        assert!((t.exponent - 0.5).abs() < 0.05);
    }

    #[test]
    fn errors_and_windows() {
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (4.0, 1.0)], FitWindow::All).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 1.0)], FitWindow::All).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (1.0, 1.0), (4.0, 1.0)], FitWindow::All).is_err());
        let rows: Vec<(f64, f64)> = (0..6).map(|k| (2f64.powi(k), if k < 3 { 1.0 } else { 2f64.powi(-k) })).collect();
        let t = fit_rate(&rows, FitWindow::TailHalf).unwrap();
        assert!((t.exponent - 1.0).abs() < 1e-12);
    }
}
