//! Binary predictor artifact.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NCPM" | u32 format version | u32 header length | header JSON | tensors
//! ```
//!
//! The header lists the registry, vocabulary, dimensions, thresholds,
//! ablation flags, training metadata and the tensor table (name, length)
//! in storage order. Tensors follow as consecutive f64 values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Ablation, Dims, Params, Vocab};
use super::{PredictorError, PredictorModel, TrainingMeta};
use crate::tactic::TacticRegistry;

pub const MAGIC: &[u8; 4] = b"NCPM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct DimsRepr {
    vocab: usize,
    tactics: usize,
    word: usize,
    tactic: usize,
    product: usize,
    hidden: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    registry: TacticRegistry,
    vocab: Vec<String>,
    dims: DimsRepr,
    thresholds: Vec<f64>,
    ablation: Ablation,
    meta: TrainingMeta,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &PredictorModel) -> Vec<u8> {
    let d = model.params.dims();
    let tensors = model.params.tensors();
    let header = Header {
        registry: model.registry.clone(),
        vocab: model.vocab.words().to_vec(),
        dims: DimsRepr {
            vocab: d.vocab,
            tactics: d.tactics,
            word: d.word,
            tactic: d.tactic,
            product: d.product,
            hidden: d.hidden,
        },
        thresholds: model.thresholds.clone(),
        ablation: model.ablation,
        meta: model.meta.clone(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> PredictorError {
    PredictorError::Artifact(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<PredictorModel, PredictorError> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("not a predictor artifact (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    let d = &header.dims;
    let dims = Dims {
        vocab: d.vocab,
        tactics: d.tactics,
        word: d.word,
        tactic: d.tactic,
        product: d.product,
        hidden: d.hidden,
    };
    if header.vocab.len() != dims.vocab || header.registry.len() != dims.tactics {
        return Err(bad("vocabulary or registry size disagrees with dimensions"));
    }
    if header.thresholds.len() != dims.tactics
        || header.thresholds.iter().any(|g| !(0.0..=1.0).contains(g))
    {
        return Err(bad("thresholds must be one per tactic, within [0, 1]"));
    }
    let mut params = Params::zeros(dims);
    let mut offset = 12 + hlen;
    {
        let mut slots = params.tensors_mut();
        if slots.len() != header.tensors.len() {
            return Err(bad("tensor table has the wrong number of entries"));
        }
        for ((name, slot), entry) in slots.iter_mut().zip(&header.tensors) {
            if *name != entry.name || slot.len() != entry.len {
                return Err(bad(format!("tensor `{}` does not match the model layout", entry.name)));
            }
            let end = offset + 8 * entry.len;
            let raw = bytes.get(offset..end).ok_or_else(|| bad("truncated tensor data"))?;
            for (dst, chunk) in slot.iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            offset = end;
        }
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(PredictorModel {
        registry: header.registry,
        vocab: Vocab::from_words(header.vocab),
        params,
        thresholds: header.thresholds,
        ablation: header.ablation,
        meta: header.meta,
    })
}

pub fn save(model: &PredictorModel, path: &Path) -> Result<(), PredictorError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&to_bytes(model))?;
    f.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PredictorModel, PredictorError> {
    from_bytes(&fs::read(path)?)
}
