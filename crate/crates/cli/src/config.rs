//! Run configuration (TOML, schema version 1).
//!
//! ```toml
//! version = 1
//! seed = 42
//! mode = "forecast"            # or "embedding-analysis"
//!
//! [data]
//! source = "bundle"            # "bundle" | "files" | "synth"
//! path = "bundle-dir"
//!
//! [split]
//! train_end = "2013-12-31"     # or train_fraction / validation_fraction
//! validation_end = "2014-12-31"
//!
//! [[models]]
//! family = "lasso"
//! lambda = [1e-4, 1e-3]
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use textcast::corpus::VocabFilter;
use textcast::pipeline::{EmbeddingAnalysisConfig, FamilyGrid, MapeMode, SelectionConfig};
use textcast::series::{SplitSpec, TimeSeries};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Forecast,
    EmbeddingAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Directory written by `ingest` or `synth`.
    Bundle { path: PathBuf },
    Files {
        series: PathBuf,
        documents: PathBuf,
        #[serde(default = "default_date_field")]
        date_field: String,
        #[serde(default = "default_value_field")]
        value_field: String,
        #[serde(default)]
        unit: Option<String>,
    },
    /// Generated in memory; `spec` is a JSON or TOML synth spec.
    Synth {
        #[serde(default)]
        spec: Option<PathBuf>,
    },
}

fn default_date_field() -> String {
    "date".into()
}

fn default_value_field() -> String {
    "value".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextConfig {
    /// Built-in stopword list: "en" or "fr".
    #[serde(default)]
    pub language: Option<String>,
    /// One stopword per line; replaces the built-in list.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_end: Option<NaiveDate>,
    pub validation_end: Option<NaiveDate>,
    pub train_fraction: Option<f64>,
    pub validation_fraction: Option<f64>,
}

impl SplitConfig {
    /// Explicit dates when both are given, otherwise fractions of the series
    /// (0.6 / 0.2 by default).
    pub fn resolve(&self, series: &TimeSeries) -> Result<SplitSpec, CliError> {
        match (self.train_end, self.validation_end) {
            (Some(train_end), Some(validation_end)) => {
                return Ok(SplitSpec {
                    train_end,
                    validation_end,
                })
            }
            (None, None) => {}
            _ => return Err(CliError::Config("split: set both train_end and validation_end".into())),
        }
        let ft = self.train_fraction.unwrap_or(0.6);
        let fv = self.validation_fraction.unwrap_or(0.2);
        if !(ft > 0.0 && fv > 0.0 && ft + fv < 1.0) {
            return Err(CliError::Config("split: fractions must be positive and sum below 1".into()));
        }
        let n = series.len();
        let n_tr = (n as f64 * ft).round() as usize;
        let n_va = (n as f64 * fv).round() as usize;
        if n_tr == 0 || n_va == 0 || n_tr + n_va >= n {
            return Err(CliError::Config(format!("split: series of {n} days is too short")));
        }
        let d = series.dates();
        Ok(SplitSpec {
            train_end: d[n_tr - 1],
            validation_end: d[n_tr + n_va - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub detrend: bool,
    pub runs: usize,
    pub aggregate: bool,
    pub mape: MapeMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            detrend: false,
            runs: 10,
            aggregate: true,
            mape: MapeMode::Plain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpretConfig {
    pub top_k: usize,
    /// Prefix length compared in the three-way overlap.
    pub venn_k: usize,
    /// Words whose cosine neighbourhoods are exported.
    pub queries: Vec<String>,
    /// Words whose distance to every query is always reported.
    pub probes: Vec<String>,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        InterpretConfig {
            top_k: 20,
            venn_k: 50,
            queries: vec![],
            probes: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    pub data: DataConfig,
    #[serde(default)]
    pub text: TextConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub vocab: VocabFilter,
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    #[serde(default)]
    pub models: Vec<FamilyGrid>,
    #[serde(default)]
    pub embedding: EmbeddingAnalysisConfig,
    #[serde(default)]
    pub interpret: InterpretConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "version: unsupported schema version {} (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        if cfg.mode == Mode::Forecast && cfg.models.is_empty() {
            return Err(CliError::Config("models: at least one model family is required".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative data paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataConfig::Bundle { path } => fix(path),
            DataConfig::Files { series, documents, .. } => {
                fix(series);
                fix(documents);
            }
            DataConfig::Synth { spec } => {
                if let Some(p) = spec {
                    fix(p)
                }
            }
        }
        if let Some(p) = &mut self.text.stopwords {
            fix(p);
        }
    }
}
