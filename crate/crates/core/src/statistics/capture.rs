use serde::{Deserialize, Serialize};

use crate::ensemble::TrajectoryLog;
use crate::error::{Error, Result};
use crate::model::StateRecord;

pub const DEFAULT_MOMENTUM_BIN: f64 = 25.0;
/// Peaks whose height is within this fraction of the tallest one count as rival modes.
pub const RIVAL_PEAK_RATIO: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMomentum {
    pub p_g: f64,
    /// Every separated peak within the rival ratio, tallest first.
    pub candidates: Vec<f64>,
    pub ambiguous: bool,
    pub samples_used: usize,
}

/// Mode of the |p| histogram over samples farther than `exclusion` from any sign change.
///
/// The mode is refined to the count-weighted centroid of the peak bin and its neighbours.
pub fn capture_momentum_from_samples(
    samples: &[StateRecord],
    sign_changes: &[f64],
    exclusion: f64,
    bin_width: f64,
) -> Result<CaptureMomentum> {
    if !(bin_width > 0.0) {
        return Err(Error::config("statistics.momentum_bin", "must be positive"));
    }
    let mid_flight: Vec<f64> = samples
        .iter()
        .filter(|s| {
            let t = s.state.tau;
            let k = sign_changes.partition_point(|&c| c < t);
            let near_next = sign_changes.get(k).is_some_and(|&c| c - t < exclusion);
            let near_prev = k > 0 && t - sign_changes[k - 1] < exclusion;
            !(near_next || near_prev)
        })
        .map(|s| s.state.p.abs())
        .collect();
    if mid_flight.is_empty() {
        return Err(Error::InsufficientData("no mid-flight momentum samples".into()));
    }
    let max_p = mid_flight.iter().copied().fold(0.0, f64::max);
    let nbins = (max_p / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; nbins];
    for &a in &mid_flight {
        counts[((a / bin_width) as usize).min(nbins - 1)] += 1;
    }
    let top = *counts.iter().max().expect("non-empty");
    let threshold = (RIVAL_PEAK_RATIO * top as f64).ceil() as usize;

    // Runs of bins above the threshold; each run is one candidate mode.
    let mut peaks: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < nbins {
        if counts[i] >= threshold {
            let mut best = i;
            while i < nbins && counts[i] >= threshold {
                if counts[i] > counts[best] {
                    best = i;
                }
                i += 1;
            }
            peaks.push((best, counts[best]));
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let centroid = |k: usize| {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(nbins - 1);
        let (mut w, mut m) = (0.0, 0.0);
        for (j, &c) in counts.iter().enumerate().take(hi + 1).skip(lo) {
            let c = c as f64;
            w += c;
            m += c * (j as f64 + 0.5) * bin_width;
        }
        m / w
    };
    let candidates: Vec<f64> = peaks.iter().map(|&(k, _)| centroid(k)).collect();
    Ok(CaptureMomentum {
        p_g: candidates[0],
        ambiguous: candidates.len() > 1,
        candidates,
        samples_used: mid_flight.len(),
    })
}

/// Capture momentum pooled over all trajectories, excluding `2 / gamma` around sign changes.
pub fn detect_capture_momentum(logs: &[TrajectoryLog], gamma: f64, bin_width: f64) -> Result<CaptureMomentum> {
    let exclusion = if gamma > 0.0 { 2.0 / gamma } else { 0.0 };
    let mut pooled: Vec<StateRecord> = Vec::new();
    let mut shifted_changes: Vec<f64> = Vec::new();
    // Offset each trajectory in time so the pooled series keeps exclusions local.
    let mut offset = 0.0;
    for log in logs {
        let span = log.tau_reached - log.initial.tau + 2.0 * exclusion + 1.0;
        pooled.extend(log.samples.iter().map(|s| {
            let mut r = *s;
            r.state.tau += offset;
            r
        }));
        shifted_changes.extend(log.sign_change_times().map(|t| t + offset));
        offset += span;
    }
    capture_momentum_from_samples(&pooled, &shifted_changes, exclusion, bin_width)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::AtomState;

    fn record(tau: f64, p: f64) -> StateRecord {
        StateRecord {
            state: AtomState {
                tau,
                ..AtomState::ground(0.0, p)
            },
            energy: 0.0,
        }
    }

    #[test]
    fn gaussian_cloud_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<StateRecord> = (0..50_000)
            .map(|i| {
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                record(i as f64, sign * (300.0 + 30.0 * g))
            })
            .collect();
        let cm = capture_momentum_from_samples(&samples, &[], 0.0, 25.0).unwrap();
        assert!((cm.p_g - 300.0).abs() < 25.0, "{cm:?}");
        assert!(!cm.ambiguous);
    }

    #[test]
    fn samples_near_turning_points_are_excluded() {
        // Slow samples sit right at the sign changes and must not win.
        let mut samples: Vec<StateRecord> = (0..100).map(|i| record(i as f64 * 10.0, 510.0)).collect();
        samples.extend((0..500).map(|i| record(500.0 + i as f64 * 0.01, 5.0)));
        samples.sort_by(|a, b| a.state.tau.total_cmp(&b.state.tau));
        let cm = capture_momentum_from_samples(&samples, &[502.0], 20.0, 25.0).unwrap();
        assert!((cm.p_g - 512.5).abs() < 25.0, "{cm:?}");
    }

    #[test]
    fn two_equal_peaks_are_flagged() {
        let mut samples: Vec<StateRecord> = (0..1000).map(|i| record(i as f64, 110.0)).collect();
        samples.extend((0..1000).map(|i| record(1000.0 + i as f64, 610.0)));
        let cm = capture_momentum_from_samples(&samples, &[], 0.0, 25.0).unwrap();
        assert!(cm.ambiguous);
        assert_eq!(cm.candidates.len(), 2);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(capture_momentum_from_samples(&[], &[], 0.0, 25.0).is_err());
    }
}
