//! Checkpoint directories: `manifest.json` plus `params.bin`, a
//! concatenation of little-endian `f32` blocks in manifest order.
//!
//! Besides the trainable blocks the blob carries the frozen word vectors,
//! and the manifest carries item ids and the attribute catalog, so a
//! checkpoint serves retrieval without the original data directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::io::{ensure_dir, write_atomic};
use crate::datamodel::{AttributeCatalog, IdMap, Lexicon};
use crate::error::{Error, Result};
use crate::model::{blocks, check_layout, Dims};
use crate::numerics::{ParamSet, Tensor};
use crate::retrieval::Retriever;

use super::TrainConfig;

pub const MAGIC: &str = "CGIR1";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const WORD_VECTORS_BLOCK: &str = "word_vectors";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into `params.bin` in `f32` elements.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSnapshot {
    pub items: Vec<String>,
    pub attributes: Vec<String>,
    pub item_attributes: Vec<Vec<usize>>,
    pub words: Vec<String>,
    pub attribute_words: Vec<Vec<usize>>,
    pub dropped_attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub magic: String,
    pub version: u32,
    pub dims: Dims,
    pub config: TrainConfig,
    pub step: u64,
    /// Trainer RNG position when the checkpoint was written.
    pub rng_seed: u64,
    pub rng_word_pos: String,
    pub blocks: Vec<BlockEntry>,
    pub catalog: CatalogSnapshot,
}

/// A loaded model: parameters, vocabulary and item metadata.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub params: ParamSet,
    pub lexicon: Lexicon,
    pub items: IdMap,
    pub catalog: AttributeCatalog,
    pub dropped_attributes: Vec<String>,
    pub manifest: Manifest,
}

impl ModelBundle {
    pub fn retriever(&self) -> Result<Retriever> {
        Retriever::new(&self.params, &self.lexicon)
    }

    pub fn dims(&self) -> Dims {
        self.manifest.dims
    }
}

pub struct CheckpointParts<'a> {
    pub params: &'a ParamSet,
    pub lexicon: &'a Lexicon,
    pub items: &'a IdMap,
    pub catalog: &'a AttributeCatalog,
    pub dropped_attributes: &'a [String],
    pub config: &'a TrainConfig,
    pub step: u64,
    pub rng_word_pos: u128,
}

fn expected_order() -> Vec<&'static str> {
    let mut v: Vec<&str> = blocks::ORDER.to_vec();
    v.push(WORD_VECTORS_BLOCK);
    v
}

pub fn save_checkpoint(dir: &Path, parts: &CheckpointParts<'_>) -> Result<Manifest> {
    let dims = crate::model::dims_of(parts.params)?;
    ensure_dir(dir)?;
    let mut blob: Vec<u8> = Vec::with_capacity(4 * (parts.params.total_len() + parts.lexicon.vectors.len()));
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: &str, t: &Tensor, trainable: bool, blob: &mut Vec<u8>| {
        entries.push(BlockEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            trainable,
        });
        for &v in t.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += t.len();
    };
    for name in blocks::ORDER {
        push(name, parts.params.get(name).expect("layout checked"), true, &mut blob);
    }
    push(WORD_VECTORS_BLOCK, &parts.lexicon.vectors, false, &mut blob);

    let catalog = CatalogSnapshot {
        items: parts.items.ids().to_vec(),
        attributes: parts.catalog.attributes().ids().to_vec(),
        item_attributes: (0..parts.catalog.num_items())
            .map(|i| parts.catalog.item_attributes(i).to_vec())
            .collect(),
        words: parts.lexicon.words.clone(),
        attribute_words: parts.lexicon.attr_words.clone(),
        dropped_attributes: parts.dropped_attributes.to_vec(),
    };
    let manifest = Manifest {
        magic: MAGIC.to_string(),
        version: FORMAT_VERSION,
        dims,
        config: parts.config.clone(),
        step: parts.step,
        rng_seed: parts.config.seed,
        rng_word_pos: parts.rng_word_pos.to_string(),
        blocks: entries,
        catalog,
    };
    write_atomic(&dir.join(PARAMS_FILE), &blob)?;
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    match value.get("magic").and_then(|m| m.as_str()) {
        Some(MAGIC) => {}
        Some(other) => return Err(bad(format!("unsupported checkpoint magic `{other}`, expected `{MAGIC}`"))),
        None => return Err(bad(format!("{} has no magic string", path.display()))),
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    if manifest.version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported checkpoint version {}, expected {FORMAT_VERSION}",
            manifest.version
        )));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelBundle> {
    let manifest = load_manifest(dir)?;
    let order = expected_order();
    let names: Vec<&str> = manifest.blocks.iter().map(|b| b.name.as_str()).collect();
    if names != order {
        return Err(bad(format!("block order {names:?} does not match the expected {order:?}")));
    }
    let mut offset = 0usize;
    for b in &manifest.blocks {
        if b.offset != offset {
            return Err(bad(format!(
                "block `{}` starts at element {} but the previous blocks end at {offset}",
                b.name, b.offset
            )));
        }
        offset += b.shape.iter().product::<usize>();
    }
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != 4 * offset {
        return Err(bad(format!(
            "{} holds {} bytes but the manifest describes {} bytes",
            path.display(),
            bytes.len(),
            4 * offset
        )));
    }
    let read_block = |b: &BlockEntry| -> Result<Tensor> {
        let n: usize = b.shape.iter().product();
        let data: Vec<f64> = bytes[4 * b.offset..4 * (b.offset + n)]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Tensor::new(b.shape.clone(), data).map_err(|e| bad(format!("block `{}`: {e}", b.name)))
    };
    let mut params = ParamSet::new();
    let mut vectors = None;
    for b in &manifest.blocks {
        let t = read_block(b)?;
        if b.name == WORD_VECTORS_BLOCK {
            vectors = Some(t);
        } else {
            params.insert(b.name.clone(), t)?;
        }
    }
    check_layout(&params, manifest.dims).map_err(|e| bad(format!("parameter layout: {e}")))?;
    let vectors = vectors.expect("order checked");

    let snap = &manifest.catalog;
    if snap.items.len() != manifest.dims.num_items
        || snap.item_attributes.len() != snap.items.len()
        || snap.attribute_words.len() != snap.attributes.len()
        || vectors.shape() != [snap.words.len(), manifest.dims.word_dim]
    {
        return Err(bad("catalog snapshot does not match the parameter shapes"));
    }
    if snap
        .attribute_words
        .iter()
        .flatten()
        .any(|&w| w >= snap.words.len())
    {
        return Err(bad("attribute word index out of range"));
    }
    let items = IdMap::from_ordered(snap.items.clone());
    let catalog = AttributeCatalog::new(IdMap::from_ordered(snap.attributes.clone()), snap.item_attributes.clone())
        .map_err(|e| bad(format!("catalog snapshot: {e}")))?;
    let lexicon = Lexicon {
        words: snap.words.clone(),
        vectors,
        attr_words: snap.attribute_words.clone(),
    };
    Ok(ModelBundle {
        params,
        lexicon,
        items,
        catalog,
        dropped_attributes: snap.dropped_attributes.clone(),
        manifest,
    })
}
