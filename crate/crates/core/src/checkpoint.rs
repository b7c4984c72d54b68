//! Checkpoints: `meta.json` plus `params.bin`, the entity matrix followed by
//! the relation matrix, row-major little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::matrix::Matrix;
use crate::models::{EmbeddingSet, ModelKind};

pub const FORMAT_VERSION: u32 = 1;
pub const PACKING: &str = "contiguous-blocks";
pub const ENSEMBLE_SUFFIX: &str = ".ens";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub model: ModelKind,
    pub d: usize,
    pub entity_count: usize,
    pub relation_count: usize,
    pub base_relation_count: usize,
    pub packing: String,
    pub precision: String,
    pub vocab_hash: String,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn new(model: ModelKind, kg: &KnowledgeGraph, params: &EmbeddingSet, seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model,
            d: params.dim(),
            entity_count: params.entity_count(),
            relation_count: params.relation_count(),
            base_relation_count: kg.base_relation_count(),
            packing: PACKING.into(),
            precision: "f32-le".into(),
            vocab_hash: kg.vocab_hash(),
            seed,
        }
    }

    pub fn check_dataset(&self, kg: &KnowledgeGraph) -> Result<()> {
        let hash = kg.vocab_hash();
        if hash != self.vocab_hash {
            return Err(Error::VocabMismatch {
                checkpoint: self.vocab_hash.clone(),
                dataset: hash,
            });
        }
        Ok(())
    }
}

pub fn save(dir: &Path, meta: &CheckpointMeta, params: &EmbeddingSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let mut bytes = Vec::with_capacity(4 * params.values().count());
    for &x in params.values() {
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let bin_path = dir.join("params.bin");
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
}

pub fn load(dir: &Path) -> Result<(CheckpointMeta, EmbeddingSet)> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }
    if meta.packing != PACKING {
        return Err(Error::Checkpoint(format!(
            "unknown packing `{}`",
            meta.packing
        )));
    }
    meta.model.check_dim(meta.d)?;

    let bin_path = dir.join("params.bin");
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let n_entity = meta.entity_count * meta.d;
    let n_relation = meta.relation_count * meta.d;
    if bytes.len() != 4 * (n_entity + n_relation) {
        return Err(Error::Checkpoint(format!(
            "params.bin has {} bytes, expected {}",
            bytes.len(),
            4 * (n_entity + n_relation)
        )));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    let entity = Matrix::from_vec(
        meta.entity_count,
        meta.d,
        values.by_ref().take(n_entity).collect(),
    )?;
    let relation = Matrix::from_vec(meta.relation_count, meta.d, values.collect())?;
    Ok((meta, EmbeddingSet::new(entity, relation)?))
}
