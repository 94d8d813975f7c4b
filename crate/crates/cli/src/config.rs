//! Run configuration, read from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use redflag_core::discretize::DEFAULT_CATEGORIES;
use redflag_core::grm::{FitConfig, GridSettings, RotationConfig};
use redflag_core::selection::{Criterion, DEFAULT_THRESHOLD_PCT};
use redflag_core::{FlagId, FlagSpec};
use serde::{Deserialize, Serialize};

use crate::ingest::{ColumnMapping, Stage};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub flags: Option<Vec<FlagId>>,
    #[serde(default)]
    pub discretize: DiscretizeConfig,
    #[serde(default)]
    pub screen: ScreenConfig,
    #[serde(default)]
    pub fit: FitSweepConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Stage table paths; `call` and `award` are required.
    pub tables: BTreeMap<Stage, PathBuf>,
    pub mapping: ColumnMapping,
    pub year: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizeConfig {
    pub categories: usize,
}

impl Default for DiscretizeConfig {
    fn default() -> Self {
        Self { categories: DEFAULT_CATEGORIES }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    pub alpha: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self { alpha: redflag_core::correlation::DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSweepConfig {
    pub d_min: usize,
    pub d_max: usize,
    pub gh_nodes: usize,
    pub max_tensor_dims: usize,
    pub qmc_size: usize,
    pub max_cycles: usize,
    pub rel_tol: f64,
    pub param_tol: f64,
    pub newton_steps: usize,
    pub rotation_starts: usize,
    pub rotation_tolerance: f64,
    pub rotation_max_iter: usize,
}

impl Default for FitSweepConfig {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            d_min: 1,
            d_max: 3,
            gh_nodes: f.grid.gh_nodes,
            max_tensor_dims: f.grid.max_tensor_dims,
            qmc_size: f.grid.qmc_size,
            max_cycles: f.max_cycles,
            rel_tol: f.rel_tol,
            param_tol: f.param_tol,
            newton_steps: f.newton_steps,
            rotation_starts: f.rotation.random_starts,
            rotation_tolerance: f.rotation.tolerance,
            rotation_max_iter: f.rotation.max_iter,
        }
    }
}

impl FitSweepConfig {
    /// Estimation settings; `seed` drives both the quasi-random grid and the
    /// random rotation starts.
    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            grid: GridSettings {
                gh_nodes: self.gh_nodes,
                max_tensor_dims: self.max_tensor_dims,
                qmc_size: self.qmc_size,
                qmc_seed: seed,
            },
            max_cycles: self.max_cycles,
            rel_tol: self.rel_tol,
            param_tol: self.param_tol,
            newton_steps: self.newton_steps,
            rotation: RotationConfig {
                gamma: 0.0,
                tolerance: self.rotation_tolerance,
                max_iter: self.rotation_max_iter,
                random_starts: self.rotation_starts,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub threshold_pct: f64,
    pub criteria: Vec<Criterion>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            threshold_pct: DEFAULT_THRESHOLD_PCT,
            criteria: redflag_core::selection::DEFAULT_CRITERIA.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub cut: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { cut: 0.2 }
    }
}

fn default_seed() -> u64 {
    redflag_core::grm::GridSettings::default().qmc_seed
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.input.tables.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for s in [Stage::Call, Stage::Award] {
            if !self.input.tables.contains_key(&s) {
                return bad(format!("input.tables.{s} is required"));
            }
        }
        for (s, p) in &self.input.tables {
            if p.as_os_str().is_empty() {
                return bad(format!("input.tables.{s} is empty"));
            }
            if !self.input.mapping.columns.contains_key(s) {
                return bad(format!("no column mapping for table {s}"));
            }
        }
        self.input.mapping.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.fit.d_min < 1 || self.fit.d_max < self.fit.d_min {
            return bad(format!("need 1 <= d_min <= d_max, got {}..{}", self.fit.d_min, self.fit.d_max));
        }
        if self.discretize.categories < 2 || self.discretize.categories > u8::MAX as usize {
            return bad(format!("categories must be in 2..=255, got {}", self.discretize.categories));
        }
        if self.select.criteria.is_empty() {
            return bad("select.criteria must not be empty".into());
        }
        if !(self.select.threshold_pct > 0.0) {
            return bad(format!("select.threshold_pct must be positive, got {}", self.select.threshold_pct));
        }
        if !(self.report.cut >= 0.0) {
            return bad(format!("report.cut must be non-negative, got {}", self.report.cut));
        }
        if let Some(flags) = &self.flags {
            if flags.is_empty() {
                return bad("flags must not be empty".into());
            }
        }
        Ok(())
    }

    pub fn flag_specs(&self) -> Vec<FlagSpec> {
        match &self.flags {
            Some(f) => f.iter().map(|&id| FlagSpec::of(id)).collect(),
            None => FlagSpec::standard(),
        }
    }
}
