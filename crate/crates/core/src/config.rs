//! Run configuration: JSON schema, loading, and resolution into a fully
//! validated simulation setup.
//!
//! A run is described by two files. The run config names the horizon,
//! battery, forecast source, and output location; the loads file is a JSON
//! array of load descriptions (pole locations, size, dwell times). Paths
//! inside the config resolve relative to the config file's directory, so a
//! config directory can be copied around as a unit; the output directory
//! resolves relative to the working directory like any CLI output path.

use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryError, BatterySpec};
use crate::forecast::{gen_solar_curve, load_forecast_csv, ForecastError, ForecastSeries};
use crate::loadmodel::{DiscreteLoadModel, LoadModelError, LoadSpec};
use crate::switchset::{HorizonConfig, LoadSwitchState, SwitchSetError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("forecast: specify exactly one of `csv_path` or `synthetic`")]
    ForecastSource,
    #[error("--seed only applies to a synthetic forecast; this config reads a CSV")]
    SeedWithCsv,
    #[error("forecast sample spacing {got_s} s does not match horizon fine_dt_s {want_s} s")]
    ForecastSpacing { want_s: f64, got_s: f64 },
    #[error("loads file {path}: {what}")]
    Loads { path: String, what: String },
    #[error("load {id}: {source}")]
    Load { id: u32, source: LoadModelError },
    #[error("load {id}: {source}")]
    LoadDwell { id: u32, source: SwitchSetError },
    #[error("horizon: {0}")]
    Horizon(SwitchSetError),
    #[error("battery: {0}")]
    Battery(#[from] BatteryError),
    #[error("soc_init = {got}: must lie in [0, 1]")]
    SocInit { got: f64 },
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
    #[error("workers = 0: need at least one worker")]
    ZeroWorkers,
}

/// Top-level run configuration, parsed from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Loads file, relative to the config file's directory.
    pub loads_path: PathBuf,
    pub forecast: ForecastSource,
    pub horizon: HorizonBlock,
    #[serde(default)]
    pub battery: BatteryBlock,
    /// Where `run` writes its outputs, relative to the working directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for candidate evaluation; defaults to the machine's
    /// available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Either a CSV file or a seeded synthetic curve — exactly one.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticForecast>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticForecast {
    pub duration_s: f64,
    #[serde(default = "default_peak_pu")]
    pub peak_pu: f64,
    pub seed: u64,
    #[serde(default = "default_noise_level")]
    pub noise_level: f64,
}

fn default_peak_pu() -> f64 {
    1.0
}

fn default_noise_level() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonBlock {
    pub n_steps: usize,
    pub ctrl_interval_s: f64,
    pub fine_dt_s: f64,
}

/// Battery parameters plus the run's initial SOC. Every field has the demo
/// default, so a config may set only what it changes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryBlock {
    pub p_norm: f64,
    pub s_norm: f64,
    pub soc_lo: f64,
    pub soc_hi: f64,
    pub c: [f64; 4],
    pub soc_init: f64,
}

impl Default for BatteryBlock {
    fn default() -> Self {
        let spec = BatterySpec::<f64>::default();
        BatteryBlock {
            p_norm: spec.p_norm,
            s_norm: spec.s_norm,
            soc_lo: spec.soc_lo,
            soc_hi: spec.soc_hi,
            c: spec.c,
            soc_init: 0.5,
        }
    }
}

impl BatteryBlock {
    pub fn to_spec(self) -> BatterySpec<f64> {
        BatterySpec {
            p_norm: self.p_norm,
            s_norm: self.s_norm,
            soc_lo: self.soc_lo,
            soc_hi: self.soc_hi,
            c: self.c,
        }
    }
}

/// One load in the loads file. Poles are `[re, im]` pairs in rad/s; complex
/// poles must appear with their conjugates.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub id: u32,
    pub size_pu: f64,
    pub poles_on: Vec<[f64; 2]>,
    pub poles_off: Vec<[f64; 2]>,
    pub t_on_min_s: f64,
    pub t_off_min_s: f64,
}

impl LoadEntry {
    pub fn to_spec(&self) -> LoadSpec<f64> {
        let poles = |ps: &[[f64; 2]]| ps.iter().map(|&[re, im]| Complex::new(re, im)).collect();
        LoadSpec {
            id: self.id,
            size_pu: self.size_pu,
            poles_on: poles(&self.poles_on),
            poles_off: poles(&self.poles_off),
            t_on_min_s: self.t_on_min_s,
            t_off_min_s: self.t_off_min_s,
        }
    }

    pub fn from_spec(spec: &LoadSpec<f64>) -> Self {
        let pairs = |ps: &[Complex<f64>]| ps.iter().map(|p| [p.re, p.im]).collect();
        LoadEntry {
            id: spec.id,
            size_pu: spec.size_pu,
            poles_on: pairs(&spec.poles_on),
            poles_off: pairs(&spec.poles_off),
            t_on_min_s: spec.t_on_min_s,
            t_off_min_s: spec.t_off_min_s,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates a loads file: a non-empty JSON array of `LoadEntry`
/// with unique ids, each passing the load-model checks.
pub fn load_loads_file(path: &Path) -> Result<Vec<LoadSpec<f64>>, ConfigError> {
    let entries: Vec<LoadEntry> = read_json(path)?;
    let loads_err = |what: String| ConfigError::Loads {
        path: path.display().to_string(),
        what,
    };
    if entries.is_empty() {
        return Err(loads_err("no loads defined".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut specs = Vec::with_capacity(entries.len());
    for entry in &entries {
        if !seen.insert(entry.id) {
            return Err(loads_err(format!("duplicate load id {}", entry.id)));
        }
        let spec = entry.to_spec();
        spec.validate().map_err(|source| ConfigError::Load {
            id: entry.id,
            source,
        })?;
        specs.push(spec);
    }
    Ok(specs)
}

/// A run config resolved against the filesystem: loads parsed and
/// discretized, forecast materialized, every precondition checked. Anything
/// that fails here is a configuration error, as opposed to a failure while
/// simulating.
#[derive(Clone, Debug)]
pub struct SimSetup {
    pub specs: Vec<LoadSpec<f64>>,
    pub models: Vec<DiscreteLoadModel<f64>>,
    pub horizon: HorizonConfig<f64>,
    pub battery: BatterySpec<f64>,
    pub soc_init: f64,
    pub forecast: ForecastSeries<f64>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses a config file without touching anything it references.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        read_json(path)
    }

    /// Resolves this config against `base_dir` (normally the config file's
    /// directory) into a ready-to-run setup.
    pub fn build(&self, base_dir: &Path) -> Result<SimSetup, ConfigError> {
        let horizon = HorizonConfig::new(
            self.horizon.n_steps,
            self.horizon.ctrl_interval_s,
            self.horizon.fine_dt_s,
        )
        .map_err(ConfigError::Horizon)?;

        let specs = load_loads_file(&resolve(base_dir, &self.loads_path))?;
        let mut models = Vec::with_capacity(specs.len());
        for spec in &specs {
            // Fails fast on dwell times that do not fit the control grid.
            LoadSwitchState::initial(spec, &horizon).map_err(|source| ConfigError::LoadDwell {
                id: spec.id,
                source,
            })?;
            let model = DiscreteLoadModel::new(spec.clone(), horizon.fine_dt_s())
                .map_err(|source| ConfigError::Load {
                    id: spec.id,
                    source,
                })?;
            models.push(model);
        }

        let battery = self.battery.to_spec();
        battery.validate()?;
        let soc_init = self.battery.soc_init;
        if !(0.0..=1.0).contains(&soc_init) || !soc_init.is_finite() {
            return Err(ConfigError::SocInit { got: soc_init });
        }

        let forecast = match (&self.forecast.csv_path, &self.forecast.synthetic) {
            (Some(csv), None) => {
                let series = load_forecast_csv(&resolve(base_dir, csv))?;
                let want = horizon.fine_dt_s();
                let got = series.dt_s();
                if (got - want).abs() > 1e-9 * want.max(1.0) {
                    return Err(ConfigError::ForecastSpacing {
                        want_s: want,
                        got_s: got,
                    });
                }
                series
            }
            (None, Some(syn)) => gen_solar_curve(
                syn.duration_s,
                syn.peak_pu,
                syn.seed,
                syn.noise_level,
                horizon.fine_dt_s(),
            )?,
            _ => return Err(ConfigError::ForecastSource),
        };

        let workers = match self.workers {
            Some(0) => return Err(ConfigError::ZeroWorkers),
            Some(k) => k,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };

        Ok(SimSetup {
            specs,
            models,
            horizon,
            battery,
            soc_init,
            forecast,
            output_dir: self.output_dir.clone(),
            workers,
        })
    }
}
