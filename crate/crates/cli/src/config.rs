//! Pipeline configuration: one JSON document, every field overridable by a
//! command-line flag.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mathsift_client::EndpointConfig;
use mathsift_core::degrader::DegradationSpec;
use mathsift_core::matcher::MatchConfig;
use mathsift_core::sftgen::{AugmentConfig, TrainLayout};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed_corpus: Option<PathBuf>,
    pub crawl_corpus: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    #[serde(rename = "match")]
    pub match_config: Option<MatchConfig>,
    pub degradation: Option<DegradationSpec>,
    pub endpoint: Option<EndpointConfig>,
    pub augment: Option<AugmentConfig>,
    pub train_layout: Option<TrainLayout>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read `{}`", path.display()))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("config: `{}` is not valid", path.display()))?;
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

/// Fails with the offending field name when a required input is missing or
/// absent from disk.
pub fn require_path(field: &str, flag: Option<PathBuf>, config: Option<&PathBuf>) -> Result<PathBuf> {
    let path = flag
        .or_else(|| config.cloned())
        .with_context(|| format!("{field}: no path given (flag or config)"))?;
    if !path.exists() {
        bail!("{field}: path `{}` does not exist", path.display());
    }
    Ok(path)
}

/// Output directory resolution: flag, then config, then `./out`.
pub fn resolve_output_dir(flag: Option<PathBuf>, config: &PipelineConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

pub fn ensure_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("output_dir: cannot create `{}`", dir.display()))?;
    Ok(())
}
