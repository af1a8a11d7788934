use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS_PER_DECADE: u32 = 10;

/// Empirical density on geometrically spaced bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `count / (total * width)` per bin.
    pub density: Vec<f64>,
    pub total: u64,
}

impl LogHistogram {
    pub fn from_counts(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::Contract("need one more edge than counts".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || !(edges[0] > 0.0) {
            return Err(Error::Contract("edges must be positive and strictly increasing".into()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData("histogram is empty".into()));
        }
        let density = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, w)| c as f64 / (total as f64 * (w[1] - w[0])))
            .collect();
        Ok(Self {
            edges,
            counts,
            density,
            total,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Geometric bin centres.
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }

    /// Sum of density times width, 1 up to rounding.
    pub fn integral(&self) -> f64 {
        self.density.iter().zip(self.widths()).map(|(d, w)| d * w).sum()
    }
}

/// Log-binned probability density of positive samples.
pub fn log_binned_pdf(samples: &[f64], bins_per_decade: u32) -> Result<LogHistogram> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to histogram".into()));
    }
    if bins_per_decade == 0 {
        return Err(Error::config("statistics.bins_per_decade", "must be >= 1"));
    }
    if let Some(bad) = samples.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Contract(format!("sample {bad} is not positive and finite")));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(0.0, f64::max);
    let b = bins_per_decade as f64;
    let step = 10f64.powf(1.0 / b);

    let (first, n) = if hi > lo {
        (lo, ((hi / lo).log10() * b).ceil().max(1.0) as usize)
    } else {
        (lo / step.sqrt(), 1)
    };
    let mut edges: Vec<f64> = (0..=n).map(|i| first * 10f64.powf(i as f64 / b)).collect();
    edges[0] = edges[0].min(lo);
    if edges[n] < hi {
        edges[n] = hi;
    }
    if edges[n] == hi && hi > lo && n > 0 {
        // Keep the largest sample strictly inside the closed last bin.
        edges[n] = hi * (1.0 + 1e-12);
    }

    let mut counts = vec![0u64; n];
    for &t in samples {
        let mut idx = (((t / first).log10() * b).floor().max(0.0) as usize).min(n - 1);
        while idx > 0 && t < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < n && t >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    LogHistogram::from_counts(edges, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_is_one_normalized_bin() {
        let h = log_binned_pdf(&[3.0; 10], 10).unwrap();
        assert_eq!(h.bins(), 1);
        assert_eq!(h.counts[0], 10);
        assert!((h.integral() - 1.0).abs() < 1e-12);
        assert!(h.edges[0] < 3.0 && h.edges[1] > 3.0);
    }

    #[test]
    fn duplicating_samples_keeps_density() {
        let s: Vec<f64> = (1..500).map(|i| (i as f64).powf(1.3)).collect();
        let mut d = s.clone();
        d.extend_from_slice(&s);
        let a = log_binned_pdf(&s, 10).unwrap();
        let b = log_binned_pdf(&d, 10).unwrap();
        assert_eq!(a.edges, b.edges);
        for (x, y) in a.density.iter().zip(&b.density) {
            assert!((x - y).abs() <= 1e-15 * x.abs());
        }
        assert_eq!(b.total, 2 * a.total);
    }

    #[test]
    fn every_sample_lands_in_a_bin() {
        let s: Vec<f64> = (0..1000).map(|i| 1.0 + i as f64 * 0.37).collect();
        let h = log_binned_pdf(&s, 7).unwrap();
        assert_eq!(h.total, 1000);
        assert!((h.integral() - 1.0).abs() < 1e-12);
        assert!(h.edges.windows(2).all(|w| w[1] > w[0]));
        for &t in &s {
            assert!(t >= h.edges[0] && t < *h.edges.last().unwrap());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(log_binned_pdf(&[], 10).is_err());
        assert!(matches!(log_binned_pdf(&[1.0, 0.0], 10), Err(Error::Contract(_))));
    }
}
