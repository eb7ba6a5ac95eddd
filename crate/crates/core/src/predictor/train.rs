//! Stochastic gradient descent with per-example updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Ablation, Dims, Grads, Params, Vocab};
use super::{EpochLog, PredictorData, PredictorError, PredictorModel, TrainingMeta};
use crate::detector::embeddings::Embeddings;
use crate::detector::AnnotatedDialog;
use crate::tactic::TacticRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub hidden: usize,
    /// Defaults to the pretrained table's dimension, else 300.
    pub word_dim: Option<usize>,
    pub tactic_dim: usize,
    pub product_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub clip_norm: Option<f64>,
    pub freeze_words: bool,
    pub min_count: usize,
    pub ablation: Ablation,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            word_dim: None,
            tactic_dim: 32,
            product_dim: 16,
            learning_rate: 0.1,
            epochs: 15,
            dropout: 0.5,
            clip_norm: Some(5.0),
            freeze_words: false,
            min_count: 1,
            ablation: Ablation::FULL,
        }
    }
}

pub fn build_vocab(train: &[AnnotatedDialog], min_count: usize) -> Vocab {
    Vocab::build(
        train
            .iter()
            .flat_map(|d| d.dialog.events.iter())
            .filter_map(|e| e.kind.text()),
        min_count,
    )
}

/// Fresh model with seeded random parameters; word rows found in the
/// pretrained table are copied in.
pub fn initialize(
    registry: &TacticRegistry,
    vocab: Vocab,
    config: &PredictorConfig,
    embeddings: Option<&Embeddings>,
    seed: u64,
) -> Result<(PredictorModel, ChaCha8Rng), PredictorError> {
    let word = match (config.word_dim, embeddings) {
        (Some(d), Some(e)) if d != e.dim() => {
            return Err(PredictorError::EmbeddingDim {
                table: e.dim(),
                model: d,
            })
        }
        (Some(d), _) => d,
        (None, Some(e)) => e.dim(),
        (None, None) => 300,
    };
    let dims = Dims {
        vocab: vocab.len(),
        tactics: registry.len(),
        word,
        tactic: config.tactic_dim,
        product: config.product_dim,
        hidden: config.hidden,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::init(dims, &mut rng);
    let mut pretrained_rows = 0;
    if let Some(e) = embeddings {
        for (id, w) in vocab.words().iter().enumerate() {
            if let Some(v) = e.get(w) {
                for (dst, src) in params.word_emb.row_mut(id).iter_mut().zip(v) {
                    *dst = f64::from(*src);
                }
                pretrained_rows += 1;
            }
        }
    }
    if pretrained_rows == 0 {
        log::warn!("no pretrained word vectors matched; word embeddings start random");
    }
    let model = PredictorModel {
        registry: registry.clone(),
        vocab,
        params,
        thresholds: vec![0.5; registry.len()],
        ablation: config.ablation,
        meta: TrainingMeta {
            seed,
            epochs: 0,
            learning_rate: config.learning_rate,
            dropout: config.dropout,
            clip_norm: config.clip_norm,
            freeze_words: config.freeze_words,
            pretrained_rows,
            log: Vec::new(),
            config_hash: String::new(),
        },
    };
    Ok((model, rng))
}

pub fn mean_loss(model: &PredictorModel, data: &PredictorData) -> Option<f64> {
    if data.examples.is_empty() {
        return None;
    }
    let total: f64 = data
        .examples
        .iter()
        .map(|ex| {
            let (w, s, c) = data.inputs(ex);
            let f = model
                .params
                .forward::<ChaCha8Rng>(w, s, c, model.ablation, None);
            Params::loss(&f, &ex.target)
        })
        .sum();
    Some(total / data.examples.len() as f64)
}

/// Trains on `train` with dev loss logged per epoch. Thresholds are left
/// at 0.5; calibrate separately.
pub fn train_predictor(
    train: &[AnnotatedDialog],
    dev: &[AnnotatedDialog],
    registry: &TacticRegistry,
    config: &PredictorConfig,
    embeddings: Option<&Embeddings>,
    seed: u64,
) -> Result<PredictorModel, PredictorError> {
    let vocab = build_vocab(train, config.min_count);
    let (mut model, mut rng) = initialize(registry, vocab, config, embeddings, seed)?;
    let train_data = PredictorData::build(train, &model.vocab, registry);
    let dev_data = PredictorData::build(dev, &model.vocab, registry);
    fit(&mut model, &train_data, &dev_data, config, &mut rng)?;
    Ok(model)
}

/// Runs `config.epochs` epochs of SGD on prepared data.
pub fn fit(
    model: &mut PredictorModel,
    train: &PredictorData,
    dev: &PredictorData,
    config: &PredictorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), PredictorError> {
    let lr = config.learning_rate;
    let mut order: Vec<usize> = (0..train.examples.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        for &i in &order {
            let ex = &train.examples[i];
            let (w, s, c) = train.inputs(ex);
            let fwd = model
                .params
                .forward(w, s, c, model.ablation, Some((config.dropout, &mut *rng)));
            let loss = Params::loss(&fwd, &ex.target);
            if !loss.is_finite() {
                return Err(PredictorError::Diverged {
                    epoch,
                    example: i,
                    lr,
                });
            }
            let mut g = Grads::zeros(&model.params);
            model.params.backward(&fwd, &ex.target, model.ablation, &mut g);
            if let Some(max) = config.clip_norm {
                let n = g.norm();
                if n > max {
                    g.scale(max / n);
                }
            }
            model.params.apply(&g, lr, config.freeze_words);
        }
        let train_loss = mean_loss(model, train).unwrap_or(0.0);
        let dev_loss = mean_loss(model, dev);
        if !train_loss.is_finite() || !model.params.is_finite() {
            return Err(PredictorError::Diverged {
                epoch,
                example: train.examples.len(),
                lr,
            });
        }
        log::info!("epoch {epoch}: train loss {train_loss:.4}, dev loss {dev_loss:?}");
        model.meta.log.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
        });
        model.meta.epochs = epoch;
    }
    Ok(())
}
