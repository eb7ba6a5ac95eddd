// Resolved configuration, artifact locations and model loading.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use coach_core::config::RunConfig;
use coach_core::corpus::{parse_corpus, CorpusFormat, Dialog, OutcomeThresholds, SuccessLabel};
use coach_core::detector::embeddings::Embeddings;
use coach_core::detector::learned::DetectorModel;
use coach_core::detector::{AnnotatedDialog, Detector, LexiconSet};
use coach_core::engine::Coach;
use coach_core::outcome::OutcomeModel;
use coach_core::predictor::{artifact, PredictorModel};
use coach_core::realizer::{ExemplarIndex, Realizer, Templates};
use coach_core::tactic::TacticRegistry;

pub const CORPUS: &str = "corpus.jsonl";
pub const LABELS: &str = "labels.json";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const DETECTOR: &str = "detector.json";
pub const PREDICTOR: &str = "predictor.ncpm";
pub const OUTCOME: &str = "outcome.json";
pub const SHALLOW: &str = "shallow.json";
pub const EXEMPLARS: &str = "exemplars.json";

/// Train/dev/test membership and success labels, fixed by `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub config_hash: String,
    pub seed: u64,
    pub thresholds: OutcomeThresholds,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub labels: BTreeMap<String, SuccessLabel>,
}

pub struct Splits {
    pub train: Vec<AnnotatedDialog>,
    pub dev: Vec<AnnotatedDialog>,
    pub test: Vec<AnnotatedDialog>,
    pub labels: BTreeMap<String, SuccessLabel>,
}

pub struct Ctx {
    pub config: RunConfig,
    pub registry: TacticRegistry,
    pub hash: String,
    pub out: PathBuf,
    pub artifacts: PathBuf,
}

impl Ctx {
    pub fn new(config_path: Option<&Path>, seed: Option<u64>, out: PathBuf) -> Result<Self> {
        let mut config = match config_path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        let registry = config.registry()?;
        let hash = config.hash();
        let artifacts = config.paths.artifacts.clone().unwrap_or_else(|| out.clone());
        Ok(Self { config, registry, hash, out, artifacts })
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.artifacts.join(name)
    }

    pub fn require(&self, name: &str, made_by: &str) -> Result<PathBuf> {
        let p = self.artifact(name);
        if !p.exists() {
            bail!("{} not found; run `coach {made_by}` first", p.display());
        }
        Ok(p)
    }

    pub fn write_artifact(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        write_file(&self.artifact(name), contents)
    }

    /// Writes `<out>/reports/<name>.json` and prints the table.
    pub fn report<T: Serialize>(&self, name: &str, value: &T, table: &str) -> Result<()> {
        let json = serde_json::to_string_pretty(value)? + "\n";
        let path = write_file(&self.out.join("reports").join(format!("{name}.json")), json.as_bytes())?;
        print!("{table}");
        log::info!("report written to {}", path.display());
        Ok(())
    }

    pub fn ensure_registry(&self, found: &TacticRegistry, what: &str) -> Result<()> {
        if *found != self.registry {
            bail!(
                "{what} was trained with tactic order {:?}, but the config uses {:?}",
                found.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
                self.registry.iter().map(|t| t.as_str()).collect::<Vec<_>>()
            );
        }
        Ok(())
    }

    pub fn lexicons(&self) -> Result<LexiconSet> {
        Ok(match &self.config.paths.lexicons {
            Some(dir) => LexiconSet::with_overrides(dir)?,
            None => LexiconSet::builtin(),
        })
    }

    pub fn embeddings(&self) -> Result<Option<Embeddings>> {
        self.config
            .paths
            .embeddings
            .as_ref()
            .map(|p| Embeddings::load(p).with_context(|| format!("loading {}", p.display())))
            .transpose()
    }

    pub fn templates(&self) -> Result<Templates> {
        let t = match &self.config.paths.templates {
            Some(p) => Templates::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Templates::builtin(),
        };
        t.validate(&self.registry)?;
        Ok(t)
    }

    pub fn corpus(&self) -> Result<Vec<Dialog>> {
        let path = self.require(CORPUS, "ingest")?;
        let parsed = parse_corpus(&std::fs::read(&path)?, CorpusFormat::Normalized)?;
        if !parsed.rejected.is_empty() {
            bail!("{}: {} invalid dialogs", path.display(), parsed.rejected.len());
        }
        Ok(parsed.dialogs)
    }

    pub fn labels(&self) -> Result<LabelFile> {
        read_json(&self.require(LABELS, "label")?)
    }

    /// The trained detector, or the rule-only detector with a warning.
    pub fn detector(&self) -> Result<Detector> {
        let lex = Arc::new(self.lexicons()?);
        let path = self.artifact(DETECTOR);
        if !path.exists() {
            log::warn!("{} not found; using keyword rules only", path.display());
            return Ok(Detector::rule_only(self.registry.clone(), lex));
        }
        let model = DetectorModel::from_json(&std::fs::read_to_string(&path)?)?;
        self.ensure_registry(&model.registry, "the detector")?;
        let emb = self.embeddings()?.map(Arc::new);
        Ok(Detector::from_model(&model, lex, emb)?)
    }

    pub fn annotations(&self) -> Result<Vec<AnnotatedDialog>> {
        let path = self.require(ANNOTATIONS, "annotate")?;
        let text = std::fs::read_to_string(&path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
            })
            .collect()
    }

    pub fn splits(&self) -> Result<Splits> {
        let labels = self.labels()?;
        let mut by_id: BTreeMap<String, AnnotatedDialog> = self
            .annotations()?
            .into_iter()
            .map(|d| (d.dialog.id.clone(), d))
            .collect();
        let mut take = |ids: &[String]| -> Result<Vec<AnnotatedDialog>> {
            ids.iter()
                .map(|id| {
                    by_id
                        .remove(id)
                        .with_context(|| format!("dialog {id} is labeled but not annotated; rerun `coach annotate`"))
                })
                .collect()
        };
        Ok(Splits {
            train: take(&labels.train)?,
            dev: take(&labels.dev)?,
            test: take(&labels.test)?,
            labels: labels.labels,
        })
    }

    pub fn predictor(&self) -> Result<PredictorModel> {
        let m = artifact::load(&self.require(PREDICTOR, "train predictor")?)?;
        self.ensure_registry(&m.registry, "the predictor")?;
        Ok(m)
    }

    pub fn outcome(&self) -> Result<OutcomeModel> {
        let text = std::fs::read_to_string(self.require(OUTCOME, "train outcome")?)?;
        let m = OutcomeModel::from_json(&text)?;
        self.ensure_registry(&m.registry, "the outcome model")?;
        Ok(m)
    }

    pub fn coach(&self, detector: &Detector) -> Result<Coach> {
        let predictor = self.predictor()?;
        let outcome = self.outcome()?;
        let index: ExemplarIndex = read_json(&self.require(EXEMPLARS, "train outcome")?)?;
        let realizer = Realizer::new(self.templates()?, index);
        Ok(Coach::new(detector, Arc::new(predictor), Arc::new(outcome), Arc::new(realizer))?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)?;
    Ok(path.to_owned())
}
