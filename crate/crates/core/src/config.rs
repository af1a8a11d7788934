//! Run configuration: a sectioned TOML file plus dotted `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::DEFAULT_DTAU;
use crate::ensemble::{EnsembleConfig, InitialConditions, RecordSelection};
use crate::error::{Error, Result};
use crate::fokker_planck::FpeGrid;
use crate::model::LatticeParams;
use crate::statistics::{EnergyBins, SweepOptions, DEFAULT_BINS_PER_DECADE, DEFAULT_MIN_BIN_COUNT, DEFAULT_MIN_R_SQUARED, DEFAULT_MOMENTUM_BIN};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "LATTICE_WALK_OUT";
pub const CONFIG_ECHO_FILE: &str = "run.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_trajectories: u64,
    pub tau_end: f64,
    pub master_seed: u64,
    pub dtau: f64,
    pub sample_decimation: u64,
    pub record: RecordSelection,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        Self {
            n_trajectories: e.n_trajectories,
            tau_end: e.tau_end,
            master_seed: e.master_seed,
            dtau: DEFAULT_DTAU,
            sample_decimation: e.sample_decimation,
            record: e.record,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticsConfig {
    pub bins_per_decade: u32,
    /// Fixed `[T_lo, T_hi]` for the slope fit; automatic when absent.
    pub fit_range: Option<(f64, f64)>,
    pub min_r_squared: f64,
    pub min_bin_count: usize,
    pub energy_bins: EnergyBins,
    pub momentum_bin: f64,
    /// Flights a sweep point needs before its slope is reported.
    pub min_flights: usize,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        Self {
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
            fit_range: None,
            min_r_squared: DEFAULT_MIN_R_SQUARED,
            min_bin_count: DEFAULT_MIN_BIN_COUNT,
            energy_bins: EnergyBins {
                lo: -0.5,
                hi: 3.0,
                count: 14,
            },
            momentum_bin: DEFAULT_MOMENTUM_BIN,
            min_flights: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSource {
    /// `D(H)` and `c` from the lattice parameters.
    Analytic,
    /// `fpe.c` and `fpe.d`.
    Constant,
    /// Table read from `fpe.diffusion_csv`.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpeConfig {
    pub grid: FpeGrid,
    pub coefficients: CoefficientSource,
    pub c: f64,
    pub d: f64,
    pub diffusion_csv: Option<PathBuf>,
    pub h0: f64,
    /// Width of the Gaussian start; zero starts from a point.
    pub initial_width: f64,
    pub tau_span: f64,
    pub dtau_out: f64,
    pub tau_max: f64,
}

impl Default for FpeConfig {
    fn default() -> Self {
        Self {
            grid: FpeGrid::default(),
            coefficients: CoefficientSource::Analytic,
            c: 0.0,
            d: 6.25e-8,
            diffusion_csv: None,
            h0: 0.01,
            initial_width: 0.0,
            tau_span: 1e6,
            dtau_out: 1e4,
            tau_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: LatticeParams,
    pub ensemble: EnsembleSection,
    pub initial: InitialConditions,
    pub statistics: StatisticsConfig,
    pub fpe: FpeConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Read `path` (defaults when `None`), then apply `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse::<toml::Table>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: e.span().map_or(0, |s| line_of(&text, s.start)),
                    message: e.message().to_string(),
                })?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| {
                let key = e.path().to_string();
                Error::config(key, e.into_inner().message().trim().to_string())
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble_config().validate()?;
        self.statistics.energy_bins.validate()?;
        if self.statistics.bins_per_decade == 0 {
            return Err(Error::config("statistics.bins_per_decade", "must be positive"));
        }
        if !(self.statistics.momentum_bin > 0.0) {
            return Err(Error::config("statistics.momentum_bin", "must be positive"));
        }
        if let Some((lo, hi)) = self.statistics.fit_range {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::config("statistics.fit_range", "need 0 < lo < hi"));
            }
        }
        Ok(())
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_trajectories: self.ensemble.n_trajectories,
            tau_end: self.ensemble.tau_end,
            master_seed: self.ensemble.master_seed,
            dtau: self.ensemble.dtau,
            sample_decimation: self.ensemble.sample_decimation,
            record: self.ensemble.record,
            params: self.params,
            initial: self.initial,
        }
    }

    pub fn sweep_options(&self, workers: usize) -> SweepOptions {
        SweepOptions {
            bins_per_decade: self.statistics.bins_per_decade,
            fit_range: self.statistics.fit_range,
            min_r_squared: self.statistics.min_r_squared,
            min_flights: self.statistics.min_flights,
            workers,
        }
    }

    /// Output directory: explicit setting, then the environment, then `./out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Write the merged configuration next to a command's outputs.
    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CONFIG_ECHO_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Apply one `dotted.key=value` override. The value is read as a TOML literal
/// and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config("--set", format!("expected key=value, got `{item}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty segment in override key"));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cursor = table;
    for (depth, part) in parents.iter().enumerate() {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            Error::config(parts[..=depth].join("."), "is a value, not a section")
        })?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
