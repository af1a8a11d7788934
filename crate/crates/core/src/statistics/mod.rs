//! Flight extraction, log-binned densities, slope fits, energy-space
//! diffusion estimates, capture momentum and detuning sweeps.

mod capture;
mod diffusion;
mod fit;
mod flights;
mod histogram;
mod sweep;

pub use capture::{
    capture_momentum_from_samples, detect_capture_momentum, CaptureMomentum, DEFAULT_MOMENTUM_BIN,
};
pub use diffusion::{
    energy_increments, estimate_diffusion, DiffusionBin, DiffusionEstimate, EnergyBins,
    EnergyIncrement, DEFAULT_MIN_BIN_COUNT,
};
pub use fit::{
    fit_exponential_cutoff, fit_power_law_slope, PowerLawFit, DEFAULT_MIN_R_SQUARED, MIN_FIT_BINS,
};
pub use flights::{crossings_of_trace, extract_flights, flights_from_crossings, FlightRecord, FlightSet};
pub use histogram::{log_binned_pdf, LogHistogram, DEFAULT_BINS_PER_DECADE};
pub use sweep::{detuning_sweep, sweep_point, SweepOptions, SweepPoint, SweepRow};

use crate::ensemble::TrajectoryLog;

/// Pooled flight durations of the finished trajectories of an ensemble.
#[derive(Debug, Clone, Default)]
pub struct FlightSummary {
    pub durations: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub censored: usize,
    pub censored_duration: f64,
    pub total_duration: f64,
    /// Aborted trajectories left out of the statistics.
    pub excluded_trajectories: usize,
}

impl FlightSummary {
    pub fn from_logs(logs: &[TrajectoryLog]) -> Self {
        let mut set = FlightSet::default();
        let mut out = FlightSummary::default();
        for log in logs {
            if !log.completion.is_finished() {
                out.excluded_trajectories += 1;
                continue;
            }
            out.total_duration += log.tau_reached - log.initial.tau;
            set.merge(extract_flights(log));
        }
        out.durations = set.durations().collect();
        out.censored = set.censored;
        out.censored_duration = set.censored_duration;
        if !out.durations.is_empty() {
            out.mean = out.durations.iter().sum::<f64>() / out.durations.len() as f64;
            let mut sorted = out.durations.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            out.median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
        }
        out
    }

    /// Fraction of simulated time spent in censored intervals.
    pub fn censored_fraction(&self) -> f64 {
        if self.total_duration > 0.0 {
            self.censored_duration / self.total_duration
        } else {
            0.0
        }
    }
}
