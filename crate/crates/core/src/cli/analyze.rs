use std::path::Path;

use serde::Serialize;

use super::{opt, Common, CsvOut, Failure, Outcome};
use crate::ensemble::{read_ensemble, real};
use crate::error::Error;
use crate::fokker_planck::analytic_diffusion;
use crate::observables::tau_to_us;
use crate::statistics::{
    detect_capture_momentum, energy_increments, estimate_diffusion, extract_flights,
    fit_power_law_slope, log_binned_pdf, CaptureMomentum, FlightSummary, PowerLawFit,
};

#[derive(Debug, Serialize)]
struct Report {
    n_flights: usize,
    mean_t: Option<f64>,
    mean_t_us: Option<f64>,
    median_t: Option<f64>,
    censored_fraction: f64,
    excluded_trajectories: usize,
    fit: Option<PowerLawFit>,
    capture: Option<CaptureMomentum>,
}

pub(super) fn run(events_dir: &Path, common: &Common) -> Outcome {
    let config = common.load()?;
    let stats = &config.statistics;
    let out_dir = common.out.clone().unwrap_or_else(|| events_dir.to_path_buf());
    let (manifest, logs) = read_ensemble(events_dir).map_err(Failure::Runtime)?;
    let params = manifest.config.params;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut flights = CsvOut::create(&out_dir.join("flights.csv"))?;
    flights.row(["trajectory_id", "t_start", "t_end", "T", "T_us"])?;
    for log in logs.iter().filter(|l| l.completion.is_finished()) {
        for f in extract_flights(log).flights {
            flights.row([
                log.trajectory_id.to_string(),
                real(f.t_start),
                real(f.t_end),
                real(f.duration),
                real(tau_to_us(f.duration, &params)?),
            ])?;
        }
    }
    flights.finish()?;

    let summary = FlightSummary::from_logs(&logs);
    let mut pdf = CsvOut::create(&out_dir.join("pdf.csv"))?;
    pdf.row(["T_center", "density", "T_lo", "T_hi", "count", "fit_density", "alpha"])?;
    let mut fit = None;
    if summary.durations.is_empty() {
        eprintln!("warning: no complete flights; pdf.csv and flights.csv are empty");
    } else {
        let hist = log_binned_pdf(&summary.durations, stats.bins_per_decade)?;
        match fit_power_law_slope(&hist, stats.fit_range, stats.min_r_squared) {
            Ok(f) => {
                if !f.meets_r_squared {
                    eprintln!(
                        "warning: no fit window reaches R^2 >= {}; best has {:.4}",
                        stats.min_r_squared, f.r_squared
                    );
                }
                fit = Some(f);
            }
            Err(e) => eprintln!("warning: slope not fitted: {e}"),
        }
        for (i, t) in hist.centers().into_iter().enumerate() {
            let line = fit
                .filter(|f| t >= f.t_lo && t <= f.t_hi)
                .map(|f| (f.intercept + f.alpha * t.ln()).exp());
            pdf.row([
                real(t),
                real(hist.density[i]),
                real(hist.edges[i]),
                real(hist.edges[i + 1]),
                hist.counts[i].to_string(),
                opt(line),
                opt(fit.map(|f| f.alpha)),
            ])?;
        }
    }
    pdf.finish()?;

    let estimate = estimate_diffusion(&energy_increments(&logs), &stats.energy_bins, stats.min_bin_count)?;
    let mut diffusion = CsvOut::create(&out_dir.join("diffusion.csv"))?;
    diffusion.row(["H_center", "D_hat", "C_hat", "n", "D_analytic", "mean_dH", "mean_dH_stderr"])?;
    for b in &estimate.bins {
        diffusion.row([
            real(b.h_center),
            real(b.d_hat),
            real(b.c_hat),
            b.n_events.to_string(),
            real(analytic_diffusion(b.h_center, &params)),
            real(b.mean_delta_h),
            real(b.mean_delta_h_stderr),
        ])?;
    }
    diffusion.finish()?;

    let capture = if logs.iter().any(|l| !l.samples.is_empty()) {
        match detect_capture_momentum(&logs, params.gamma, stats.momentum_bin) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("warning: capture momentum not found: {e}");
                None
            }
        }
    } else {
        None
    };

    let has_flights = !summary.durations.is_empty();
    let report = Report {
        n_flights: summary.durations.len(),
        mean_t: has_flights.then_some(summary.mean),
        mean_t_us: if has_flights { Some(tau_to_us(summary.mean, &params)?) } else { None },
        median_t: has_flights.then_some(summary.median),
        censored_fraction: summary.censored_fraction(),
        excluded_trajectories: summary.excluded_trajectories,
        fit,
        capture: capture.clone(),
    };
    let path = out_dir.join("analysis.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    println!("flights             {}", report.n_flights);
    if let (Some(t), Some(us)) = (report.mean_t, report.mean_t_us) {
        println!("mean T              {t:.6e} ({us:.4} us)");
    }
    match fit {
        Some(f) => println!(
            "alpha               {:.4} ± {:.4}  (T in [{:.4e}, {:.4e}], R^2 {:.4})",
            f.alpha, f.stderr, f.t_lo, f.t_hi, f.r_squared
        ),
        None => println!("alpha               n/a"),
    }
    println!("censored fraction   {:.4}", report.censored_fraction);
    if report.excluded_trajectories > 0 {
        println!("aborted (excluded)  {}", report.excluded_trajectories);
    }
    if let Some(c) = &capture {
        println!(
            "capture momentum    {:.1}{}",
            c.p_g,
            if c.ambiguous { "  (ambiguous)" } else { "" }
        );
    }
    println!("{:>10} {:>12} {:>12} {:>12} {:>8}", "H", "D_hat", "D_analytic", "C_hat", "n");
    for b in &estimate.bins {
        println!(
            "{:>10.4} {:>12.4e} {:>12.4e} {:>12.4e} {:>8}",
            b.h_center,
            b.d_hat,
            analytic_diffusion(b.h_center, &params),
            b.c_hat,
            b.n_events
        );
    }
    for (h, n) in &estimate.dropped {
        eprintln!("note: energy bin at H = {h:.4} has only {n} increments; dropped");
    }
    Ok(())
}
