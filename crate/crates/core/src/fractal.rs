//! Detrended fluctuation analysis (order 1).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaResult {
    pub window_sizes: Vec<usize>,
    pub fluctuations: Vec<f64>,
    pub hurst: f64,
    /// `2 - hurst`.
    pub dimension: f64,
    pub fit_r2: f64,
}

fn profile(series: &[f64]) -> Vec<f64> {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x - mean;
            Some(*acc)
        })
        .collect()
}

/// Mean squared residual of `y` about its least-squares line.
fn detrended_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let x_bar = (n - 1.0) / 2.0;
    let y_bar = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - x_bar;
        sxy += dx * (v - y_bar);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    y.iter()
        .enumerate()
        .map(|(i, v)| (v - y_bar - slope * (i as f64 - x_bar)).powi(2))
        .sum::<f64>()
        / n
}

fn fluctuation_of_profile(profile: &[f64], window: usize) -> f64 {
    let len = profile.len();
    let segments = len / window;
    let offset = len - segments * window;
    let total: f64 = (0..segments)
        .map(|s| {
            detrended_variance(&profile[s * window..(s + 1) * window])
                + detrended_variance(&profile[offset + s * window..offset + (s + 1) * window])
        })
        .sum();
    (total / (2 * segments) as f64).sqrt()
}

/// `F(n)`: RMS residual of the linearly detrended profile over segments of
/// length `window`, taken from both ends of the series.
pub fn dfa_fluctuation(series: &[f64], window: usize) -> Result<f64> {
    if window < 4 {
        return Err(Error::Domain(format!("window must be >= 4, got {window}")));
    }
    if series.len() < 2 * window {
        return Err(Error::Domain(format!(
            "series of length {} is too short for window {window}",
            series.len()
        )));
    }
    Ok(fluctuation_of_profile(&profile(series), window))
}

/// Twelve windows spaced geometrically from 8 to `len/8`, without repeats.
pub fn default_windows(len: usize) -> Vec<usize> {
    let hi = (len / 8) as f64;
    let lo = 8.0f64;
    if hi <= lo {
        return vec![8];
    }
    let mut out: Vec<usize> = (0..12)
        .map(|i| (lo * (hi / lo).powf(i as f64 / 11.0)).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Log-log slope of `F(n)` against `n`.
pub fn hurst_exponent(series: &[f64], windows: &[usize]) -> Result<DfaResult> {
    let mut windows = windows.to_vec();
    windows.sort_unstable();
    windows.dedup();
    if windows.len() < 4 {
        return Err(Error::Domain(format!("need at least 4 windows, got {}", windows.len())));
    }
    let (lo, hi) = (windows[0], *windows.last().unwrap());
    if (hi as f64 / lo as f64).log10() < 1.5 - 1e-9 {
        return Err(Error::Domain(format!("windows {lo}..{hi} span less than 1.5 decades")));
    }
    if lo < 4 || series.len() < 2 * hi {
        return Err(Error::Domain(format!(
            "windows {lo}..{hi} do not fit a series of length {}",
            series.len()
        )));
    }
    let prof = profile(series);
    let fluctuations: Vec<f64> = windows.par_iter().map(|&n| fluctuation_of_profile(&prof, n)).collect();
    // rounding leaves F ~ 1e-16 |x| n for series that should give F = 0
    let magnitude = series.iter().map(|x| x.abs()).sum::<f64>() / series.len() as f64;
    if fluctuations
        .iter()
        .zip(&windows)
        .any(|(f, &n)| !(*f > 1e-12 * magnitude * n as f64 && f.is_finite()))
    {
        return Err(Error::Fit("fluctuation function has zero or non-finite values".into()));
    }
    let x: Vec<f64> = windows.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = fluctuations.iter().map(|f| f.ln()).collect();
    let k = x.len() as f64;
    let (x_bar, y_bar) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let sxx: f64 = x.iter().map(|v| (v - x_bar).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - y_bar).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - x_bar) * (b - y_bar)).sum();
    let hurst = sxy / sxx;
    let fit_r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DfaResult {
        window_sizes: windows,
        fluctuations,
        hurst,
        dimension: 2.0 - hurst,
        fit_r2,
    })
}

/// DFA of the increments of `traj` sampled on `points` equal time steps.
pub fn trajectory_dfa(traj: &Trajectory, points: usize, windows: Option<&[usize]>) -> Result<DfaResult> {
    let inc = traj.grid_increments(points);
    match windows {
        Some(w) => hurst_exponent(&inc, w),
        None => hurst_exponent(&inc, &default_windows(inc.len())),
    }
}
