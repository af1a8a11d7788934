use serde::{Deserialize, Serialize};

use super::histogram::LogHistogram;
use crate::error::{Error, Result};

pub const MIN_FIT_BINS: usize = 5;
pub const DEFAULT_MIN_R_SQUARED: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Log-log slope of the density.
    pub alpha: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub bins_used: usize,
    /// False when the window was auto-selected but no window reached the R^2 target.
    pub meets_r_squared: bool,
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
    stderr: f64,
    r_squared: f64,
}

/// Weighted least squares `y = a + b x`.
fn weighted_line(points: &[(f64, f64, f64)]) -> Option<Line> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    // Normalize weights so that the residual variance has the usual meaning.
    let scale = n as f64 / sw;
    let s2 = ss_res * scale / (n as f64 - 2.0);
    Some(Line {
        slope,
        intercept,
        stderr: (s2 / (sxx * scale)).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
    })
}

fn log_points(hist: &LogHistogram) -> Vec<(usize, (f64, f64, f64))> {
    hist.centers()
        .into_iter()
        .zip(&hist.density)
        .zip(&hist.counts)
        .enumerate()
        .filter(|(_, ((_, &d), &c))| c > 0 && d > 0.0)
        .map(|(i, ((t, &d), &c))| (i, (t.log10(), d.log10(), c as f64)))
        .collect()
}

fn to_fit(line: Line, pts: &[(f64, f64, f64)], meets: bool) -> PowerLawFit {
    PowerLawFit {
        alpha: line.slope,
        stderr: line.stderr,
        intercept: line.intercept,
        r_squared: line.r_squared,
        t_lo: 10f64.powf(pts[0].0),
        t_hi: 10f64.powf(pts[pts.len() - 1].0),
        bins_used: pts.len(),
        meets_r_squared: meets,
    }
}

/// Slope of the log-log density, weighted by bin counts.
///
/// With an explicit `fit_range` every occupied bin whose centre lies inside it is
/// used. Otherwise the range is the widest window of occupied bins, after the
/// first bin and before the tail onset, whose fit reaches `min_r_squared`.
pub fn fit_power_law_slope(
    hist: &LogHistogram,
    fit_range: Option<(f64, f64)>,
    min_r_squared: f64,
) -> Result<PowerLawFit> {
    let points = log_points(hist);
    if let Some((lo, hi)) = fit_range {
        let pts: Vec<_> = points
            .iter()
            .filter(|(_, p)| {
                let t = 10f64.powf(p.0);
                t >= lo && t <= hi
            })
            .map(|(_, p)| *p)
            .collect();
        if pts.len() < MIN_FIT_BINS {
            return Err(Error::InsufficientData(format!(
                "only {} occupied bins in fit range [{lo}, {hi}], need {MIN_FIT_BINS}",
                pts.len()
            )));
        }
        let line = weighted_line(&pts).ok_or_else(|| {
            Error::InsufficientData(format!("degenerate fit range [{lo}, {hi}]"))
        })?;
        return Ok(to_fit(line, &pts, line.r_squared >= min_r_squared));
    }

    // Tail onset: the first empty bin past the most populated one. Empty bins
    // among the sparse shortest durations do not end the window.
    let peak = (0..hist.counts.len())
        .max_by_key(|&i| (hist.counts[i], std::cmp::Reverse(i)))
        .unwrap_or(0);
    let onset = (peak..hist.counts.len())
        .find(|&i| hist.counts[i] == 0)
        .unwrap_or(hist.counts.len());
    let candidates: Vec<(usize, (f64, f64, f64))> =
        points.into_iter().filter(|&(i, _)| i >= 1 && i < onset).collect();
    let pts: Vec<(f64, f64, f64)> = candidates.iter().map(|c| c.1).collect();
    if pts.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientData(format!(
            "only {} occupied bins before the tail onset, need {MIN_FIT_BINS}",
            pts.len()
        )));
    }

    for len in (MIN_FIT_BINS..=pts.len()).rev() {
        let best = (0..=pts.len() - len)
            .filter_map(|start| {
                let w = &pts[start..start + len];
                weighted_line(w).map(|l| (l, start))
            })
            .filter(|(l, _)| l.r_squared >= min_r_squared)
            .max_by(|a, b| a.0.r_squared.total_cmp(&b.0.r_squared));
        if let Some((line, start)) = best {
            return Ok(to_fit(line, &pts[start..start + len], true));
        }
    }
    let (line, start) = (0..=pts.len() - MIN_FIT_BINS)
        .filter_map(|s| weighted_line(&pts[s..s + MIN_FIT_BINS]).map(|l| (l, s)))
        .max_by(|a, b| a.0.r_squared.total_cmp(&b.0.r_squared))
        .ok_or_else(|| Error::InsufficientData("no usable fit window".into()))?;
    Ok(to_fit(line, &pts[start..start + MIN_FIT_BINS], false))
}

/// Exponential cutoff rate `k` of a density `~ T^-1.5 exp(-k T)`, from a
/// weighted fit of `ln(density T^1.5)` against `T` over `[t_lo, t_hi]`.
pub fn fit_exponential_cutoff(times: &[f64], density: &[f64], t_lo: f64, t_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64, f64)> = times
        .iter()
        .zip(density)
        .filter(|(&t, &d)| t >= t_lo && t <= t_hi && d > 0.0)
        .map(|(&t, &d)| (t, (d * t.powf(1.5)).ln(), 1.0))
        .collect();
    if pts.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientData(format!(
            "only {} points in cutoff window [{t_lo}, {t_hi}]",
            pts.len()
        )));
    }
    weighted_line(&pts)
        .map(|l| -l.slope)
        .ok_or_else(|| Error::InsufficientData("degenerate cutoff window".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Histogram whose counts are the exact bin masses of `pdf` times a large number.
    fn exact_histogram(pdf: impl Fn(f64) -> f64, lo: f64, decades: usize, per_decade: usize) -> LogHistogram {
        let n = decades * per_decade;
        let edges: Vec<f64> = (0..=n)
            .map(|i| lo * 10f64.powf(i as f64 / per_decade as f64))
            .collect();
        let counts = edges
            .windows(2)
            .map(|w| {
                // Composite Simpson on the bin in log space.
                let m = 64;
                let (a, b) = (w[0].ln(), w[1].ln());
                let h = (b - a) / m as f64;
                let f = |s: f64| pdf(s.exp()) * s.exp();
                let mut acc = f(a) + f(b);
                for k in 1..m {
                    acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
                }
                (acc * h / 3.0 * 1e15).round() as u64
            })
            .collect();
        LogHistogram::from_counts(edges, counts).unwrap()
    }

    #[test]
    fn pure_power_law_slope() {
        let h = exact_histogram(|t| t.powf(-1.5), 1.0, 6, 10);
        let fit = fit_power_law_slope(&h, None, DEFAULT_MIN_R_SQUARED).unwrap();
        assert!((fit.alpha + 1.5).abs() < 0.02, "{fit:?}");
        assert!(fit.meets_r_squared);
        let fixed = fit_power_law_slope(&h, Some((10.0, 1e4)), DEFAULT_MIN_R_SQUARED).unwrap();
        assert!((fixed.alpha + 1.5).abs() < 1e-6, "{fixed:?}");
    }

    #[test]
    fn cutoff_model_is_power_law_then_steeper() {
        let k = 1e-5;
        let h = exact_histogram(|t| (-k * t).exp() * t.powf(-1.5), 1.0, 7, 10);
        let head = fit_power_law_slope(&h, Some((1.0, 1e3)), DEFAULT_MIN_R_SQUARED).unwrap();
        assert!((head.alpha + 1.5).abs() < 0.02, "{head:?}");
        let tail = fit_power_law_slope(&h, Some((1e5, 1e6)), DEFAULT_MIN_R_SQUARED).unwrap();
        assert!(tail.alpha < -2.0, "{tail:?}");
    }

    #[test]
    fn slope_is_scale_invariant() {
        let a = exact_histogram(|t| t.powf(-1.2), 1.0, 4, 10);
        let b = exact_histogram(|t| (t / 7.0).powf(-1.2) / 7.0, 7.0, 4, 10);
        let fa = fit_power_law_slope(&a, None, DEFAULT_MIN_R_SQUARED).unwrap();
        let fb = fit_power_law_slope(&b, None, DEFAULT_MIN_R_SQUARED).unwrap();
        assert!((fa.alpha - fb.alpha).abs() < 1e-9);
    }

    #[test]
    fn sparse_short_durations_do_not_end_the_window() {
        let mut h = exact_histogram(|t| t.powf(-1.5), 1.0, 5, 10);
        // A lone short flight followed by empty bins, as in simulated ensembles.
        h.counts[0] = 1;
        h.counts[1] = 0;
        h.counts[2] = 0;
        let h = LogHistogram::from_counts(h.edges.clone(), h.counts.clone()).unwrap();
        let fit = fit_power_law_slope(&h, None, DEFAULT_MIN_R_SQUARED).unwrap();
        assert!((fit.alpha + 1.5).abs() < 0.02, "{fit:?}");
        assert!(fit.bins_used > 30);
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let h = exact_histogram(|t| t.powf(-1.5), 1.0, 1, 4);
        assert!(fit_power_law_slope(&h, None, DEFAULT_MIN_R_SQUARED).is_err());
        let err = fit_power_law_slope(&h, Some((1.0, 2.0)), 0.98).unwrap_err();
        assert!(err.to_string().contains("[1, 2]"), "{err}");
    }

    #[test]
    fn cutoff_rate_recovered() {
        let k = 3e-4;
        let t: Vec<f64> = (1..200).map(|i| i as f64 * 100.0).collect();
        let d: Vec<f64> = t.iter().map(|&t| 5.0 * t.powf(-1.5) * (-k * t).exp()).collect();
        let got = fit_exponential_cutoff(&t, &d, 1000.0, 20000.0).unwrap();
        assert!((got - k).abs() < 1e-9 * k.max(1.0));
    }
}
