//! Achievable rates from exact decode reports, and sum-DoF estimation as the
//! high-SNR slope of the Monte Carlo mean sum-rate against `log₂ P`.

use std::fmt::Write as _;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{DEFAULT_H_MAX, DEFAULT_H_MIN};
use crate::linalg::{self, CMatrix, LinalgError};
use crate::round::{DecodeReport, RoundConfig, SchemeError};
use crate::scheme::Scheme;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("rates need noise: the observation of user {} is noiseless", user + 1)]
    NoiseOff { user: usize },
    #[error("noise covariance of user {} is singular", user + 1)]
    SingularNoiseCov { user: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum DofError {
    #[error("SNR grid must be strictly increasing with at least 3 points")]
    BadGrid,
    #[error("need at least one trial")]
    NoTrials,
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Rates of one round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    /// Bits per slot for each user's wanted symbols, amortized over the round.
    pub user_rates: Vec<f64>,
    /// Linear MMSE SINR of every wanted stream, users in order.
    pub stream_sinr: Vec<f64>,
    pub sum_rate: f64,
}

/// `(1/T) · log₂ det(I + P H̃ᴴ C⁻¹ H̃)` for unit-power symbols.
pub fn rate_from_parts(h_tilde: &CMatrix, noise_cov: &CMatrix, power: f64, slots: usize) -> Result<f64, RateError> {
    let ci_h = linalg::cholesky_solve(noise_cov, h_tilde)?;
    let gram = &h_tilde.adjoint() * &ci_h;
    let n = gram.rows();
    let m = CMatrix::from_fn(n, n, |i, j| {
        let herm = (gram[(i, j)] + gram[(j, i)].conj()) * 0.5;
        herm * power + if i == j { 1.0 } else { 0.0 }
    });
    Ok(linalg::log2_det_hpd(&m)? / slots as f64)
}

/// Rate of one user: wanted symbols against the covariance of noise plus every
/// other symbol (including co-decoded interferers).
pub fn user_rate(report: &DecodeReport, power: f64, slots: usize) -> Result<(f64, Vec<f64>), RateError> {
    let b = report
        .noise_gain
        .as_ref()
        .ok_or(RateError::NoiseOff { user: report.user })?;
    let g = &report.symbol_gain;
    let others: Vec<usize> = (0..g.cols()).filter(|j| !report.wanted.contains(j)).collect();
    let mut cov = b * &b.adjoint();
    if !others.is_empty() {
        let go = g.select_columns(&others);
        cov = &cov + &(&go * &go.adjoint());
    }
    let gw = g.select_columns(&report.wanted);
    let h_tilde = gw.scale_real(1.0 / power.sqrt());
    let rate = rate_from_parts(&h_tilde, &cov, power, slots).map_err(|e| match e {
        RateError::Linalg(LinalgError::NotPositiveDefinite) => RateError::SingularNoiseCov { user: report.user },
        e => e,
    })?;

    let mut sinr = Vec::with_capacity(report.wanted.len());
    for i in 0..gw.cols() {
        let mut c = cov.clone();
        for k in (0..gw.cols()).filter(|&k| k != i) {
            let gk = gw.col_matrix(k);
            c = &c + &(&gk * &gk.adjoint());
        }
        let gi = gw.col_matrix(i);
        let x = linalg::cholesky_solve(&c, &gi)?;
        sinr.push((&gi.adjoint() * &x)[(0, 0)].re);
    }
    Ok((rate, sinr))
}

pub fn round_sum_rate(reports: &[DecodeReport], power: f64, slots: usize) -> Result<RateReport, RateError> {
    let mut user_rates = Vec::with_capacity(reports.len());
    let mut stream_sinr = Vec::new();
    for r in reports {
        let (rate, sinr) = user_rate(r, power, slots)?;
        user_rates.push(rate.max(0.0));
        stream_sinr.extend(sinr);
    }
    let sum_rate = user_rates.iter().sum();
    Ok(RateReport {
        user_rates,
        stream_sinr,
        sum_rate,
    })
}

/// Inputs of a DoF sweep.
#[derive(Clone, Debug)]
pub struct DofConfig {
    pub scheme: Scheme,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub h_min: f64,
    pub h_max: f64,
    pub genie_relay: bool,
}

/// Redraws allowed per trial after a degenerate channel draw.
pub const MAX_REDRAWS: u64 = 5;
/// Largest aborted-trial fraction for which an estimate is still valid.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

impl DofConfig {
    pub fn new(scheme: Scheme) -> Self {
        DofConfig {
            scheme,
            snr_grid_db: default_grid(),
            trials: 200,
            seed: 1,
            h_min: DEFAULT_H_MIN,
            h_max: DEFAULT_H_MAX,
            genie_relay: false,
        }
    }
}

/// 50 to 90 dB in 5 dB steps.
pub fn default_grid() -> Vec<f64> {
    grid(50.0, 90.0, 5.0)
}

pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DofEstimate {
    pub scheme: String,
    pub snr_grid_db: Vec<f64>,
    /// Mean sum-rate (bits/slot) at each grid point.
    pub mean_rates: Vec<f64>,
    /// Standard error of each mean.
    pub stderr: Vec<f64>,
    /// Least-squares slope of mean sum-rate against `log₂ P` over the fit points.
    pub slope: f64,
    pub slope_stderr: f64,
    /// 95% confidence half-width of the slope.
    pub slope_half_width: f64,
    /// Grid points used by the fit (the upper half).
    pub fit_points: usize,
    pub nominal_dof: f64,
    pub trials: usize,
    pub aborted: usize,
    pub valid: bool,
    pub seed: u64,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed of a trial attempt.
pub fn trial_seed(base: u64, trial: u64, attempt: u64) -> u64 {
    mix(mix(mix(base) ^ trial) ^ attempt)
}

/// Sum-rate of one realization at every grid point, with redraws on
/// degenerate channels. `None` when every attempt was degenerate.
fn run_trial(cfg: &DofConfig, powers: &[f64], trial: u64) -> Result<Option<Vec<f64>>, DofError> {
    let slots = cfg.scheme.slot_count();
    'attempt: for attempt in 0..=MAX_REDRAWS {
        let seed = trial_seed(cfg.seed, trial, attempt);
        let channels = cfg.scheme.draw(seed, cfg.h_min, cfg.h_max)?;
        let mut rates = Vec::with_capacity(powers.len());
        for &p in powers {
            let rc = RoundConfig::new(p, true)?.with_genie(cfg.genie_relay);
            let outcome = cfg
                .scheme
                .prepare(&channels, &rc)
                .and_then(|prep| cfg.scheme.reports(&prep, &channels, &rc));
            match outcome {
                Ok(reports) => rates.push(round_sum_rate(&reports, p, slots)?.sum_rate),
                Err(e) if e.is_degenerate_draw() => {
                    debug!("trial {trial} attempt {attempt}: {e}; redrawing");
                    continue 'attempt;
                }
                Err(e) => return Err(e.into()),
            }
        }
        return Ok(Some(rates));
    }
    warn!("trial {trial} aborted after {MAX_REDRAWS} redraws");
    Ok(None)
}

/// Ordinary least squares `y = a + b x`; returns `(b, stderr(b))`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = x.len().saturating_sub(2).max(1) as f64;
    (slope, (sse / dof / sxx).sqrt())
}

/// Student-t 0.975 quantile for small degrees of freedom.
fn t_quantile(dof: usize) -> f64 {
    const T: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    T.get(dof.saturating_sub(1)).copied().unwrap_or(1.96)
}

pub fn estimate_dof(cfg: &DofConfig) -> Result<DofEstimate, DofError> {
    let g = &cfg.snr_grid_db;
    if g.len() < 3 || g.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) || g.iter().any(|v| !v.is_finite()) {
        return Err(DofError::BadGrid);
    }
    if cfg.trials == 0 {
        return Err(DofError::NoTrials);
    }
    if cfg.trials < 200 {
        warn!("{} trials is below the recommended 200", cfg.trials);
    }
    let powers: Vec<f64> = g.iter().map(|db| 10f64.powf(db / 10.0)).collect();
    let results: Vec<Option<Vec<f64>>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, &powers, t))
        .collect::<Result<_, _>>()?;

    let kept: Vec<&Vec<f64>> = results.iter().flatten().collect();
    let aborted = cfg.trials - kept.len();
    let n = kept.len() as f64;
    let mut mean_rates = vec![0.0; g.len()];
    let mut stderr = vec![0.0; g.len()];
    if !kept.is_empty() {
        for (i, (m, s)) in mean_rates.iter_mut().zip(stderr.iter_mut()).enumerate() {
            let mut sum = 0.0;
            for r in &kept {
                sum += r[i];
            }
            *m = sum / n;
            let mut ss = 0.0;
            for r in &kept {
                ss += (r[i] - *m).powi(2);
            }
            *s = if kept.len() > 1 { (ss / (n - 1.0) / n).sqrt() } else { 0.0 };
        }
    }

    let start = g.len() / 2;
    let x: Vec<f64> = g[start..].iter().map(|db| db / 10.0 * 10f64.log2()).collect();
    let (slope, slope_stderr) = fit_slope(&x, &mean_rates[start..]);
    let fit_points = x.len();
    let valid = !kept.is_empty() && (aborted as f64) <= MAX_ABORT_FRACTION * cfg.trials as f64 && slope.is_finite();
    Ok(DofEstimate {
        scheme: cfg.scheme.id().to_string(),
        snr_grid_db: g.clone(),
        mean_rates,
        stderr,
        slope,
        slope_stderr,
        slope_half_width: t_quantile(fit_points.saturating_sub(2)) * slope_stderr,
        fit_points,
        nominal_dof: cfg.scheme.nominal_dof(),
        trials: cfg.trials,
        aborted,
        valid,
        seed: cfg.seed,
    })
}

impl DofEstimate {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("estimates always serialize");
        s.push('\n');
        s
    }

    /// `snr_db,mean_rate,stderr` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,mean_rate,stderr\n");
        for ((db, m), s) in self.snr_grid_db.iter().zip(&self.mean_rates).zip(&self.stderr) {
            writeln!(out, "{db},{m},{s}").expect("writing to a string");
        }
        out
    }
}
