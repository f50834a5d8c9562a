//! Run configuration, one TOML document with a section per module.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use windcov::inference::Param;
use windcov::transport::SimConfig;
use windcov::{GridMeta, KernelFamily, ModelConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variogram: Option<VariogramSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deform: Option<DeformSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariogramSection {
    /// Input table (`x,y,value` CSV or sample JSON) for the `variogram` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default = "default_direction_bins")]
    pub n_direction_bins: usize,
    /// Upper lag bin edges; by default ten equal bins up to half the site extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag_edges: Option<Vec<f64>>,
}

impl Default for VariogramSection {
    fn default() -> Self {
        VariogramSection { data: None, n_direction_bins: default_direction_bins(), lag_edges: None }
    }
}

fn default_direction_bins() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Defaults to the `[model]` family, then Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<KernelFamily>,
    /// Starting model; by default derived from the data's variance and extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<ModelConfig>,
    #[serde(default)]
    pub fixed: Vec<Param>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Fit `gamma_prime` through the wind-speed link at this speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind_speed: Option<f64>,
    #[serde(default = "default_true")]
    pub standard_errors: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            data: None,
            family: None,
            init: None,
            fixed: Vec::new(),
            restarts: default_restarts(),
            seed: 0,
            max_iterations: default_max_iterations(),
            wind_speed: None,
            standard_errors: true,
        }
    }
}

fn default_restarts() -> usize {
    5
}

fn default_max_iterations() -> usize {
    2000
}

fn default_true() -> bool {
    true
}

/// Stretch demonstration; defaults to `a = 3`, `b = 2/3`, `theta = pi/12`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformSection {
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_theta")]
    pub theta_radians: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

impl Default for DeformSection {
    fn default() -> Self {
        DeformSection { a: default_a(), b: default_b(), theta_radians: default_theta(), n_points: default_points() }
    }
}

fn default_a() -> f64 {
    3.0
}

fn default_b() -> f64 {
    2.0 / 3.0
}

fn default_theta() -> f64 {
    PI / 12.0
}

fn default_points() -> usize {
    360
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Gaussian random field from `[model]` on `[grid]`.
    #[default]
    Gp,
    /// Transport simulation from `[transport]` observed on `[grid]`.
    Transport,
}

/// Which transport output is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportField {
    /// Per-site mean over all recorded steps.
    #[default]
    TimeMean,
    /// The last recorded step.
    Last,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default)]
    pub source: DataSource,
    #[serde(default)]
    pub field: TransportField,
}

impl Config {
    /// Reads a config file. Relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let mut config = Config::parse(&text).map_err(|message| CliError::Config { path: path.to_path_buf(), message })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for data in [config.variogram.as_mut().and_then(|v| v.data.as_mut()), config.fit.as_mut().and_then(|f| f.data.as_mut())]
            .into_iter()
            .flatten()
        {
            if data.is_relative() {
                *data = base.join(&*data);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot echo configuration: {e}")))
    }

    /// Sets every seed in the configuration.
    pub fn apply_seed(&mut self, seed: u64) {
        self.sample.get_or_insert_with(Default::default).seed = seed;
        self.fit.get_or_insert_with(Default::default).seed = seed;
        if let Some(t) = self.transport.as_mut() {
            t.seed = seed;
        }
    }

    /// Same configuration with all data seeds advanced by `k`.
    pub fn replicate(&self, k: u64) -> Config {
        let mut c = self.clone();
        let s = c.sample.get_or_insert_with(Default::default);
        s.seed = s.seed.wrapping_add(k);
        if let Some(f) = c.fit.as_mut() {
            f.seed = f.seed.wrapping_add(k);
        }
        if let Some(t) = c.transport.as_mut() {
            t.seed = t.seed.wrapping_add(k);
        }
        c
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section.as_ref().ok_or_else(|| CliError::MissingSection(name.to_string()))
    }
}
