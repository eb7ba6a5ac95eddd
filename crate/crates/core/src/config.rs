//! Run configuration shared by the CLI and the service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::DEFAULT_TAIL_FRACTION;
use crate::detector::learned::DetectorTraining;
use crate::engine::scripted::BuyerPolicy;
use crate::logistic::DEFAULT_L2_GRID;
use crate::outcome::ablation::FeatureGroups;
use crate::predictor::train::PredictorConfig;
use crate::tactic::{RegistryError, Tactic, TacticRegistry};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Lexicon directory overriding the bundled word lists.
    pub lexicons: Option<PathBuf>,
    /// Word embeddings in text format.
    pub embeddings: Option<PathBuf>,
    /// Suggestion templates overriding the bundled ones.
    pub templates: Option<PathBuf>,
    /// Artifact directory; defaults to `--out`.
    pub artifacts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { dev: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeConfig {
    pub l2_grid: Vec<f64>,
    /// Share of training dialogs labelled at each end of the ratio range.
    pub tail: f64,
    pub groups: FeatureGroups,
    /// Index exemplars from positive dialogs only.
    pub positives_only: bool,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self {
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            tail: DEFAULT_TAIL_FRACTION,
            groups: FeatureGroups::default(),
            positives_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub idle_timeout_ms: u64,
    /// Directory for session transcript exports.
    pub transcripts: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            idle_timeout_ms: 600_000,
            transcripts: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Tactic order; the default registry when absent.
    pub registry: Option<Vec<Tactic>>,
    pub paths: Paths,
    pub split: SplitConfig,
    pub detector: DetectorTraining,
    pub predictor: PredictorConfig,
    pub outcome: OutcomeConfig,
    pub buyer: BuyerPolicy,
    pub service: ServiceConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn registry(&self) -> Result<TacticRegistry, ConfigError> {
        Ok(match &self.registry {
            Some(order) => TacticRegistry::new(order.clone())?,
            None => TacticRegistry::default(),
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
