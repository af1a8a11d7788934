use serde::{Deserialize, Serialize};

use crate::ensemble::TrajectoryLog;

/// Interval between two successive sign changes of the momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub duration: f64,
    /// Largest |p| among the decimated samples inside the flight, if any were recorded.
    pub peak_abs_p: Option<f64>,
}

/// Complete flights of one trajectory plus the partial intervals at either end.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlightSet {
    pub flights: Vec<FlightRecord>,
    pub censored: usize,
    pub censored_duration: f64,
}

impl FlightSet {
    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.flights.iter().map(|f| f.duration)
    }

    pub fn merge(&mut self, other: FlightSet) {
        self.flights.extend(other.flights);
        self.censored += other.censored;
        self.censored_duration += other.censored_duration;
    }
}

/// Split `[tau_start, tau_end]` at the given crossing times.
///
/// The leading and trailing partial intervals are censored; with no crossings
/// the whole run is a single censored interval.
pub fn flights_from_crossings(crossings: &[f64], tau_start: f64, tau_end: f64) -> FlightSet {
    let Some((&first, &last)) = crossings.first().zip(crossings.last()) else {
        return FlightSet {
            flights: Vec::new(),
            censored: 1,
            censored_duration: tau_end - tau_start,
        };
    };
    let flights = crossings
        .windows(2)
        .map(|w| FlightRecord {
            t_start: w[0],
            t_end: w[1],
            duration: w[1] - w[0],
            peak_abs_p: None,
        })
        .collect();
    FlightSet {
        flights,
        censored: 2,
        censored_duration: (first - tau_start) + (tau_end - last),
    }
}

/// Flights of one trajectory, with peak |p| filled in from its samples.
pub fn extract_flights(log: &TrajectoryLog) -> FlightSet {
    let crossings: Vec<f64> = log.sign_change_times().collect();
    let mut set = flights_from_crossings(&crossings, log.initial.tau, log.tau_reached);
    if !log.samples.is_empty() {
        let mut i = 0;
        for flight in &mut set.flights {
            while i < log.samples.len() && log.samples[i].state.tau < flight.t_start {
                i += 1;
            }
            let mut peak: Option<f64> = None;
            let mut j = i;
            while j < log.samples.len() && log.samples[j].state.tau <= flight.t_end {
                let a = log.samples[j].state.p.abs();
                peak = Some(peak.map_or(a, |m| m.max(a)));
                j += 1;
            }
            flight.peak_abs_p = peak;
        }
    }
    set
}

/// Zero crossings of a sampled momentum trace, located by linear interpolation.
pub fn crossings_of_trace(trace: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for &(tau, p) in trace {
        if p == 0.0 {
            continue;
        }
        if let Some((t0, p0)) = last {
            if p0.signum() != p.signum() {
                out.push(t0 + (tau - t0) * p0 / (p0 - p));
            }
        }
        last = Some((tau, p));
    }
    out
}
