//! Exponential decay-rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::FidelitySeries;

/// Default window ends before the series first drops below this multiple of
/// the saturation floor.
pub const FLOOR_MULTIPLE: f64 = 3.0;

/// Least-squares fit of `-ln F = Gamma n - ln A` over a window of steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay rate per step.
    pub gamma_fit: f64,
    /// `ln A`; zero for a pure `exp(-Gamma n)`.
    pub log_amplitude: f64,
    /// Inclusive `[n_lo, n_hi]`.
    pub fit_window: (usize, usize),
    /// RMS residual of `ln F` around the fitted line.
    pub residual_rms: f64,
    pub points: usize,
}

impl DecayFit {
    /// `Gamma_fit / (coefficient * delta^2)`.
    pub fn ratio_to_quadratic_law(&self, coefficient: f64, delta: f64) -> f64 {
        self.gamma_fit / (coefficient * delta * delta)
    }
}

/// Long-time asymptote `(1 + N) / (N^2 + N)` of the exact average fidelity.
pub fn saturation_floor(dim: usize) -> f64 {
    let n = dim as f64;
    (1.0 + n) / (n * n + n)
}

/// `[n_0, n_hi]` where `n_hi` is the last step before `F` first drops below
/// `3 * saturation_floor(dim)`; the whole series if it never does.
pub fn default_window(n_values: &[usize], values: &[f64], dim: usize) -> Result<(usize, usize)> {
    if n_values.is_empty() || n_values.len() != values.len() {
        return Err(Error::invalid("series is empty or has mismatched columns"));
    }
    let threshold = FLOOR_MULTIPLE * saturation_floor(dim);
    let end = values
        .iter()
        .position(|&f| f < threshold)
        .unwrap_or(values.len());
    if end < 2 {
        return Err(Error::invalid(format!(
            "series falls below {threshold:.4} within one step; no pre-saturation window"
        )));
    }
    Ok((n_values[0], n_values[end - 1]))
}

/// Fits a decay rate to `(n, F)` pairs whose `n` lies in `window`.
pub fn fit_decay_values(
    n_values: &[usize],
    values: &[f64],
    window: (usize, usize),
) -> Result<DecayFit> {
    if n_values.len() != values.len() {
        return Err(Error::invalid("series columns have different lengths"));
    }
    let (lo, hi) = window;
    if lo > hi {
        return Err(Error::invalid(format!("empty fit window [{lo}, {hi}]")));
    }
    let points: Vec<(f64, f64)> = n_values
        .iter()
        .zip(values)
        .filter(|(n, _)| (lo..=hi).contains(*n))
        .map(|(&n, &f)| {
            if f > 0.0 && f.is_finite() {
                Ok((n as f64, -f.ln()))
            } else {
                Err(Error::invalid(format!(
                    "F({n}) = {f} is not positive; shrink the fit window to end before it"
                )))
            }
        })
        .collect::<Result<_>>()?;
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "fit window [{lo}, {hi}] holds {} point(s); need at least 2",
            points.len()
        )));
    }

    let m = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let offset = mean_y - slope * mean_x;
    let residual_rms = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - offset).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        gamma_fit: slope,
        log_amplitude: -offset,
        fit_window: window,
        residual_rms,
        points: points.len(),
    })
}

pub fn fit_decay(series: &FidelitySeries, window: (usize, usize)) -> Result<DecayFit> {
    fit_decay_values(&series.n_values, &series.mean, window)
}

/// [`fit_decay`] over [`default_window`].
pub fn fit_decay_default(series: &FidelitySeries, dim: usize) -> Result<DecayFit> {
    let window = default_window(&series.n_values, &series.mean, dim)?;
    fit_decay(series, window)
}
