use serde::{Deserialize, Serialize};

use super::{fit_power_law_slope, log_binned_pdf, FlightSummary};
use crate::ensemble::{run_ensemble, EnsembleConfig};
use crate::error::{Error, Result};
use crate::observables::tau_to_us;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub bins_per_decade: u32,
    pub fit_range: Option<(f64, f64)>,
    pub min_r_squared: f64,
    pub min_flights: usize,
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            bins_per_decade: super::DEFAULT_BINS_PER_DECADE,
            fit_range: None,
            min_r_squared: super::DEFAULT_MIN_R_SQUARED,
            min_flights: 1000,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub mean_t: f64,
    pub median_t: f64,
    pub mean_t_us: f64,
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub n_flights: usize,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub outcome: std::result::Result<SweepPoint, String>,
}

/// Simulate and analyse one detuning.
pub fn sweep_point(delta: f64, base: &EnsembleConfig, opts: &SweepOptions) -> Result<SweepPoint> {
    let mut config = base.clone();
    config.params.delta = delta;
    let out = run_ensemble(&config, opts.workers)?;
    let summary = FlightSummary::from_logs(&out.logs);
    if summary.durations.len() < opts.min_flights {
        return Err(Error::InsufficientData(format!(
            "{} flights at delta = {delta}, need {}",
            summary.durations.len(),
            opts.min_flights
        )));
    }
    let hist = log_binned_pdf(&summary.durations, opts.bins_per_decade)?;
    let fit = fit_power_law_slope(&hist, opts.fit_range, opts.min_r_squared)?;
    Ok(SweepPoint {
        delta,
        mean_t: summary.mean,
        median_t: summary.median,
        mean_t_us: tau_to_us(summary.mean, &config.params)?,
        alpha: fit.alpha,
        alpha_stderr: fit.stderr,
        n_flights: summary.durations.len(),
        censored_fraction: summary.censored_fraction(),
    })
}

/// Run the pipeline at each detuning. A failing point is recorded and the sweep continues.
pub fn detuning_sweep(deltas: &[f64], base: &EnsembleConfig, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if deltas.len() < 2 {
        return Err(Error::config("sweep.deltas", "≥2 points required"));
    }
    Ok(deltas
        .iter()
        .map(|&delta| SweepRow {
            delta,
            outcome: sweep_point(delta, base, opts).map_err(|e| e.to_string()),
        })
        .collect())
}
