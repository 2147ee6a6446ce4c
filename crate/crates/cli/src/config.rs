//! Optional TOML configuration file.
//!
//! ```toml
//! workers = 4
//!
//! [metric]
//! alpha = 0.5
//! beta = 0.5
//! epsilon = 1e-6
//! consistency_source = "unlearned"   # or "original"
//! uniform_flat = false
//! grayscale = false
//! mask_threshold = 0.5
//!
//! [layers]
//! feather = 2
//! fill = 0.0
//!
//! [pipeline]
//! backend = "mock"                   # "mock:<script.json>" or an http(s) URL
//! timeout_secs = 120
//! threshold = 0.7
//! max_passes = 2
//! max_candidates = 5
//! dilate = 0
//! refine = true
//! inpaint_prompt = "empty background without a {category}"
//! ```
//!
//! Every key is optional. Command-line flags override the file; the file
//! overrides `ENTANGLED_WORKERS`.

use std::path::{Path, PathBuf};

use entangled_core::Error;
use serde::Deserialize;

pub const CONFIG_ENV: &str = "ENTANGLED_CONFIG";
pub const WORKERS_ENV: &str = "ENTANGLED_WORKERS";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub layers: LayerSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub consistency_source: Option<String>,
    pub uniform_flat: Option<bool>,
    pub grayscale: Option<bool>,
    pub mask_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub feather: Option<usize>,
    pub fill: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub backend: Option<String>,
    pub timeout_secs: Option<u64>,
    pub threshold: Option<f64>,
    pub max_passes: Option<usize>,
    pub max_candidates: Option<usize>,
    pub dilate: Option<usize>,
    pub refine: Option<bool>,
    pub inpaint_prompt: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// The file named by `--config`, else by `ENTANGLED_CONFIG`, else none.
    pub fn resolve(flag: Option<&Path>) -> Result<Self, Error> {
        let path: Option<PathBuf> = flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }
}

/// Worker count: flag, then config file, then environment, then one per
/// logical core (0).
pub fn resolve_workers(flag: Option<usize>, file: &FileConfig) -> Result<usize, Error> {
    if let Some(n) = flag.or(file.workers) {
        return Ok(n);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a non-negative integer, got `{v}`"))),
        _ => Ok(0),
    }
}
