use crate::error::{CliError, CliResult};
use crate::output::read_bytes;
use egonce_core::corpus::DEFAULT_WINDOW_SEC;
use egonce_core::trainer::{SyntheticCorpusSpec, TrainConfig};
use egonce_core::Error;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Every tunable of a run. Loaded from TOML; unknown keys are rejected and
/// the seed is set once at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub window_sec: f64,
    pub train: TrainConfig,
    /// Synthetic corpus used by `train` when no feature files are given.
    pub corpus: SyntheticCorpusSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            window_sec: DEFAULT_WINDOW_SEC,
            train: TrainConfig::default(),
            corpus: SyntheticCorpusSpec::default(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Core(Error::Config(msg.into()))
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        for section in ["train", "corpus"] {
            if raw.get(section).and_then(|t| t.get("seed")).is_some() {
                return Err(config_error(format!(
                    "`{section}.seed` is not allowed; set `seed` at the top level"
                )));
            }
        }
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| config_error(format!("{} is not UTF-8", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Core(inner) => CliError::InFile(path.display().to_string(), inner),
            other => other,
        })
    }

    /// Copies the run seed into every component that consumes randomness.
    pub fn resolve_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.train.seed = self.seed;
        self.corpus.seed = self.seed;
    }
}
