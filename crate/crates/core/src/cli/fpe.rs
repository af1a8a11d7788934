use std::path::Path;

use super::{Common, CsvOut, Failure, FpeMode, Outcome};
use crate::ensemble::real;
use crate::config::{CoefficientSource, RunConfig};
use crate::error::{Error, Result};
use crate::fokker_planck::{
    first_passage_pdf, gaussian_density, point_density, solve_fpe, Coefficients, FpeGrid,
};
use crate::statistics::fit_exponential_cutoff;

/// Relative L2 error accepted by `--mode gaussian-check`.
const GAUSSIAN_CHECK_TOLERANCE: f64 = 1e-3;

pub(super) fn run(
    common: &Common,
    mode: FpeMode,
    fpt: bool,
    c: Option<f64>,
    d: Option<f64>,
    h0: Option<f64>,
) -> Outcome {
    let mut config = common.load()?;
    if c.is_some() || d.is_some() {
        config.fpe.coefficients = CoefficientSource::Constant;
    }
    if let Some(c) = c {
        config.fpe.c = c;
    }
    if let Some(d) = d {
        config.fpe.d = d;
    }
    if let Some(h0) = h0 {
        config.fpe.h0 = h0;
    }
    let dir = common.out_dir(&config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    config.write_echo(&dir)?;

    if mode == FpeMode::GaussianCheck {
        return gaussian_check(&config, &dir);
    }
    let coeffs = coefficients(&config).map_err(Failure::Usage)?;
    if fpt {
        first_passage(&config, &coeffs, &dir)
    } else {
        solve(&config, &coeffs, &dir)
    }
}

fn coefficients(config: &RunConfig) -> Result<Coefficients> {
    match config.fpe.coefficients {
        CoefficientSource::Analytic => Ok(Coefficients::Analytic { params: config.params }),
        CoefficientSource::Constant => Ok(Coefficients::Constant {
            c: config.fpe.c,
            d: config.fpe.d,
        }),
        CoefficientSource::Empirical => {
            let path = config
                .fpe
                .diffusion_csv
                .as_deref()
                .ok_or_else(|| Error::config("fpe.diffusion_csv", "required for empirical coefficients"))?;
            read_diffusion_table(path)
        }
    }
}

/// `(H_center, D_hat, C_hat)` columns of an analysis diffusion.csv.
fn read_diffusion_table(path: &Path) -> Result<Coefficients> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let headers = reader.headers().map_err(|e| Error::io(path, e.into()))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (ih, id, ic) = (column("H_center")?, column("D_hat")?, column("C_hat")?);
    let (mut h, mut d, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::io(path, e.into()))?;
        let field = |i: usize| -> Result<f64> {
            record[i].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: row + 2,
                message: format!("not a number: `{}`", &record[i]),
            })
        };
        h.push(field(ih)?);
        d.push(field(id)?);
        c.push(field(ic)?);
    }
    Coefficients::table(h, d, c)
}

fn initial_density(config: &RunConfig, grid: &FpeGrid) -> Result<Vec<f64>> {
    if config.fpe.initial_width > 0.0 {
        Ok(gaussian_density(grid, config.fpe.h0, config.fpe.initial_width))
    } else {
        point_density(grid, config.fpe.h0).map_err(|e| Error::config("fpe.h0", e.to_string()))
    }
}

fn write_density_history(
    path: &Path,
    centers: &[f64],
    snapshots: &[crate::fokker_planck::Snapshot],
) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["tau", "H_center", "density"])?;
    for s in snapshots {
        for (h, p) in centers.iter().zip(&s.density) {
            out.row([real(s.tau), real(*h), real(*p)])?;
        }
    }
    out.finish()
}

fn solve(config: &RunConfig, coeffs: &Coefficients, dir: &Path) -> Outcome {
    let fpe = &config.fpe;
    let initial = initial_density(config, &fpe.grid)?;
    let sol = solve_fpe(initial, coeffs, fpe.grid, fpe.tau_span, fpe.dtau_out)?;
    write_density_history(&dir.join("fpe.csv"), &sol.centers, &sol.snapshots)?;
    let last = sol.snapshots.last().expect("initial snapshot");
    let interior: f64 = last.density.iter().sum::<f64>() * fpe.grid.dh();
    println!("tau                 {}", last.tau);
    println!("interior mass       {interior:.12}");
    println!("absorbed (lo, hi)   {:.6e}, {:.6e}", sol.absorbed_left, sol.absorbed_right);
    Ok(())
}

fn first_passage(config: &RunConfig, coeffs: &Coefficients, dir: &Path) -> Outcome {
    let fpe = &config.fpe;
    let fp = first_passage_pdf(fpe.h0, coeffs, fpe.grid, fpe.tau_max, fpe.dtau_out)?;
    let mut out = CsvOut::create(&dir.join("fpt.csv"))?;
    out.row(["T", "density"])?;
    for (t, p) in fp.times.iter().zip(&fp.density) {
        out.row([real(*t), real(*p)])?;
    }
    out.finish()?;

    println!("absorbed            {:.6}", fp.absorbed);
    println!("remainder           {:.6}", fp.remainder);
    if fp.incomplete {
        eprintln!("warning: more than half the probability is unabsorbed at tau_max = {}", fpe.tau_max);
    }
    let slope = loglog_slope(&fp.times, &fp.density, fpe.tau_max / 10.0, fpe.tau_max);
    println!("tail slope          {}", slope.map_or("n/a".into(), |s| format!("{s:.4}")));
    let c = coeffs.drift(fpe.h0);
    if c != 0.0 {
        let rate = c * c / coeffs.diffusion(fpe.h0);
        let hi = (6.0 / rate).min(fpe.tau_max);
        match fit_exponential_cutoff(&fp.times, &fp.density, 1.0 / rate, hi) {
            Ok(fitted) => println!("cutoff rate         {fitted:.4e} (c^2/D = {rate:.4e}, ratio {:.4})", fitted / rate),
            Err(e) => eprintln!("warning: cutoff not fitted: {e}"),
        }
    }
    Ok(())
}

/// Least-squares slope of log density against log time on `[lo, hi]`.
fn loglog_slope(times: &[f64], density: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(density)
        .filter(|(&t, &p)| t >= lo && t <= hi && p > 0.0)
        .map(|(&t, &p)| (t.ln(), p.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Point source at 40% of the domain, drifting a tenth of the width while it
/// spreads to a twentieth; compared with the exact Gaussian.
fn gaussian_check(config: &RunConfig, dir: &Path) -> Outcome {
    let mut grid = config.fpe.grid;
    let d = if config.fpe.d > 0.0 { config.fpe.d } else { 6.25e-8 };
    let width = grid.h_max - grid.h_min;
    let tau = width * width / (800.0 * d);
    let c = if config.fpe.c != 0.0 { config.fpe.c } else { width / (20.0 * tau) };
    let h0 = grid.h_min + 0.4 * width;
    grid.dtau = tau / 500.0;
    let coeffs = Coefficients::Constant { c, d };
    let sol = solve_fpe(point_density(&grid, h0)?, &coeffs, grid, tau, tau)?;
    write_density_history(&dir.join("fpe.csv"), &sol.centers, &sol.snapshots)?;

    let last = &sol.snapshots.last().expect("final snapshot").density;
    let (mean, var) = (h0 + 2.0 * c * tau, 2.0 * d * tau);
    let (mut num, mut den) = (0.0, 0.0);
    for (h, p) in sol.centers.iter().zip(last) {
        let exact = (-(h - mean).powi(2) / (2.0 * var)).exp() / (std::f64::consts::TAU * var).sqrt();
        num += (p - exact).powi(2);
        den += exact * exact;
    }
    let err = (num / den).sqrt();
    println!("c = {c:e}, D = {d:e}, tau = {tau:e}, H0 = {h0}");
    println!("relative L2 error vs analytic Gaussian: {err:.3e}");
    if err < GAUSSIAN_CHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::Numerical(format!(
            "Gaussian check error {err:e} exceeds {GAUSSIAN_CHECK_TOLERANCE:e}"
        ))))
    }
}
