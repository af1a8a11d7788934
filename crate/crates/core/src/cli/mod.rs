//! Command-line front end: `simulate`, `analyze`, `fpe`, `sweep`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod analyze;
mod fpe;

use std::ffi::OsString;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::ensemble::{real, write_ensemble};
use crate::error::{Error, Result};
use crate::statistics::detuning_sweep;

#[derive(Debug, Parser)]
#[command(name = "lattice-walk", version, about = "Chaotic walking of atoms in a near-resonant optical lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a setting, e.g. `--set params.delta=-0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: `output.dir`, then $LATTICE_WALK_OUT, then ./out).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Cap on worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl Common {
    fn load(&self) -> std::result::Result<RunConfig, Failure> {
        RunConfig::load(self.config.as_deref(), &self.overrides).map_err(Failure::Usage)
    }

    fn out_dir(&self, config: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| config.output_dir())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FpeMode {
    /// Evolve the density and write fpe.csv.
    Solve,
    /// Compare against the drifting-Gaussian solution; fails above 1e-3 relative L2 error.
    GaussianCheck,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble and write one events file per trajectory plus a manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Flight durations, their density and slope, and energy-space diffusion from a run directory.
    Analyze {
        /// Directory written by `simulate`.
        events_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Energy-space Fokker-Planck solver and first-passage densities.
    Fpe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = FpeMode::Solve)]
        mode: FpeMode,
        /// Compute the first-passage density to the lower boundary instead.
        #[arg(long)]
        fpt: bool,
        /// Constant drift; implies constant coefficients.
        #[arg(long, allow_negative_numbers = true)]
        c: Option<f64>,
        /// Constant diffusion; implies constant coefficients.
        #[arg(long = "D", value_name = "D")]
        d: Option<f64>,
        /// Starting energy.
        #[arg(long, allow_negative_numbers = true)]
        h0: Option<f64>,
    },
    /// Simulate and analyse several detunings; writes sweep.csv.
    Sweep {
        /// Comma-separated detunings, e.g. `--deltas=-0.09,-0.1,-0.12`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        deltas: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parse `args` and run the selected command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let outcome = match cli.command {
        Command::Simulate { common } => simulate(&common),
        Command::Analyze { events_dir, common } => analyze::run(&events_dir, &common),
        Command::Fpe {
            common,
            mode,
            fpt,
            c,
            d,
            h0,
        } => fpe::run(&common, mode, fpt, c, d, h0),
        Command::Sweep { deltas, common } => sweep(&deltas, &common),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn simulate(common: &Common) -> Outcome {
    let config = common.load()?;
    let dir = common.out_dir(&config);
    let ensemble = config.ensemble_config();
    ensemble.validate()?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    config.write_echo(&dir)?;
    let manifest = write_ensemble(&ensemble, &dir, common.workers)?;
    let s = manifest.summary;
    println!("trajectories  {}", s.trajectories);
    println!("se_events     {}", s.se_events);
    println!("sign_changes  {}", s.sign_changes);
    println!("flights       {}", s.flights);
    println!("aborted       {}", s.aborted);
    println!("output        {}", dir.display());
    Ok(())
}

fn sweep(deltas: &[f64], common: &Common) -> Outcome {
    let config = common.load()?;
    let dir = common.out_dir(&config);
    let rows = detuning_sweep(deltas, &config.ensemble_config(), &config.sweep_options(common.workers))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    config.write_echo(&dir)?;

    let mut out = CsvOut::create(&dir.join("sweep.csv"))?;
    out.row([
        "delta",
        "mean_T_us",
        "alpha",
        "alpha_stderr",
        "n_flights",
        "median_T",
        "censored_fraction",
        "error",
    ])?;
    for row in &rows {
        match &row.outcome {
            Ok(p) => {
                println!(
                    "delta {:>10}  <T> {:>10.4} us  alpha {:>7.3} ± {:.3}  flights {}",
                    p.delta, p.mean_t_us, p.alpha, p.alpha_stderr, p.n_flights
                );
                out.row([
                    real(p.delta),
                    real(p.mean_t_us),
                    real(p.alpha),
                    real(p.alpha_stderr),
                    p.n_flights.to_string(),
                    real(p.median_t),
                    real(p.censored_fraction),
                    String::new(),
                ])?;
            }
            Err(message) => {
                eprintln!("delta {}: {message}", row.delta);
                let mut fields = vec![real(row.delta)];
                fields.extend(std::iter::repeat_n(String::new(), 6));
                fields.push(message.clone());
                out.row(fields)?;
            }
        }
    }
    out.finish()?;
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Failure::Runtime(Error::InsufficientData("every sweep point failed".into())));
    }
    Ok(())
}

/// Header-first CSV output with errors tagged by path.
struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl CsvOut {
    fn create(path: &Path) -> Result<Self> {
        let inner = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .map_err(|e| Error::io(&self.path, e.into()))
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Empty string for absent values.
fn opt(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}
