//! Pipeline settings: an optional TOML file, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Deserialize;
use splitroute_core::agents::{load_definitions, Registry, DEFAULT_ALPHA};
use splitroute_core::{PipelineConfig, ScoringMode, SplitConfig};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Structured,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Agent definition file (JSON lines)
    #[arg(long, value_name = "PATH")]
    pub agents: Option<PathBuf>,

    /// TOML file with delta, mode, max_depth, smoothing and a [split] table
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Minimum confidence for an agent to be selected
    #[arg(long, value_name = "F")]
    pub delta: Option<f64>,

    /// Node scoring: average or joint
    #[arg(long)]
    pub mode: Option<ScoringMode>,

    /// Maximum number of splits explored
    #[arg(long, value_name = "N")]
    pub max_depth: Option<usize>,

    /// Smoothing constant for example-trained agents
    #[arg(long, value_name = "F")]
    pub smoothing: Option<f64>,

    #[arg(long, value_enum, default_value_t = Format::Human)]
    pub format: Format,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    delta: Option<f64>,
    mode: Option<ScoringMode>,
    max_depth: Option<usize>,
    smoothing: Option<f64>,
    split: Option<SplitConfig>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub smoothing: f64,
    pub format: Format,
}

impl PipelineArgs {
    pub fn settings(&self) -> Result<Settings, Failure> {
        let file = match &self.config {
            Some(path) => read_config(path).map_err(Failure::Config)?,
            None => FileConfig::default(),
        };
        let defaults = PipelineConfig::default();
        let pipeline = PipelineConfig {
            delta: self.delta.or(file.delta).unwrap_or(defaults.delta),
            mode: self.mode.or(file.mode).unwrap_or(defaults.mode),
            max_depth: self
                .max_depth
                .or(file.max_depth)
                .unwrap_or(defaults.max_depth),
            split: file.split.unwrap_or(defaults.split),
        };
        pipeline.validate().map_err(|e| Failure::Config(e.into()))?;
        let smoothing = self.smoothing.or(file.smoothing).unwrap_or(DEFAULT_ALPHA);
        if !(smoothing.is_finite() && smoothing > 0.0) {
            return Err(Failure::Config(anyhow::anyhow!(
                "smoothing must be > 0, got {smoothing}"
            )));
        }
        Ok(Settings {
            pipeline,
            smoothing,
            format: self.format,
        })
    }

    pub fn agents_path(&self) -> Result<&Path, Failure> {
        self.agents
            .as_deref()
            .ok_or_else(|| Failure::Usage("--agents PATH is required".into()))
    }

    pub fn registry(&self, settings: &Settings) -> Result<Registry, Failure> {
        let path = self.agents_path()?;
        let defs = load_definitions(path).map_err(|e| Failure::Config(e.into()))?;
        Registry::from_definitions(&defs, settings.smoothing)
            .with_context(|| format!("loading agents from {}", path.display()))
            .map_err(Failure::Config)
    }
}

fn read_config(path: &Path) -> anyhow::Result<FileConfig> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
}
