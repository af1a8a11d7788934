use serde::{Deserialize, Serialize};

use crate::ensemble::TrajectoryLog;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_BIN_COUNT: usize = 100;

/// Energy change between two consecutive emissions of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyIncrement {
    /// Energy just after the earlier emission.
    pub h_prev: f64,
    pub delta_h: f64,
    pub delta_tau: f64,
}

/// Consecutive emission pairs within each trajectory.
pub fn energy_increments(logs: &[TrajectoryLog]) -> Vec<EnergyIncrement> {
    logs.iter()
        .flat_map(|log| {
            log.jumps.windows(2).map(|w| EnergyIncrement {
                h_prev: w[0].post_energy,
                delta_h: w[1].post_energy - w[0].post_energy,
                delta_tau: w[1].interval,
            })
        })
        .collect()
}

/// Uniform energy bins on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl EnergyBins {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || self.count == 0 {
            return Err(Error::config(
                "statistics.energy_bins",
                "need lo < hi and at least one bin",
            ));
        }
        Ok(())
    }

    fn index(&self, h: f64) -> Option<usize> {
        if h < self.lo || h >= self.hi {
            return None;
        }
        let i = ((h - self.lo) / (self.hi - self.lo) * self.count as f64) as usize;
        Some(i.min(self.count - 1))
    }

    fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * (self.hi - self.lo) / self.count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionBin {
    pub h_center: f64,
    /// `var(dH) / (4 mean(dtau))`.
    pub d_hat: f64,
    /// `mean(dH) / mean(dtau)`.
    pub c_hat: f64,
    pub mean_delta_h: f64,
    /// Standard error of `mean_delta_h`.
    pub mean_delta_h_stderr: f64,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionEstimate {
    pub bins: Vec<DiffusionBin>,
    /// Bins below the minimum count, as `(h_center, n)`.
    pub dropped: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum_dh: f64,
    sum_dh2: f64,
    sum_dt: f64,
}

/// Bin increments by the energy before the step; estimate drift and diffusion per bin.
pub fn estimate_diffusion(
    increments: &[EnergyIncrement],
    bins: &EnergyBins,
    min_count: usize,
) -> Result<DiffusionEstimate> {
    bins.validate()?;
    let mut acc = vec![Moments::default(); bins.count];
    for inc in increments {
        if let Some(i) = bins.index(inc.h_prev) {
            let m = &mut acc[i];
            m.n += 1;
            m.sum_dh += inc.delta_h;
            m.sum_dh2 += inc.delta_h * inc.delta_h;
            m.sum_dt += inc.delta_tau;
        }
    }
    let mut out = DiffusionEstimate {
        bins: Vec::new(),
        dropped: Vec::new(),
    };
    for (i, m) in acc.iter().enumerate() {
        let center = bins.center(i);
        if m.n < min_count.max(2) {
            if m.n > 0 {
                out.dropped.push((center, m.n));
            }
            continue;
        }
        let n = m.n as f64;
        let mean = m.sum_dh / n;
        let var = ((m.sum_dh2 - n * mean * mean) / (n - 1.0)).max(0.0);
        let mean_dt = m.sum_dt / n;
        out.bins.push(DiffusionBin {
            h_center: center,
            d_hat: var / (4.0 * mean_dt),
            c_hat: mean / mean_dt,
            mean_delta_h: mean,
            mean_delta_h_stderr: (var / n).sqrt(),
            n_events: m.n,
        });
    }
    Ok(out)
}
