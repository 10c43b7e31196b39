//! A frozen checkpoint answering id-level queries. The CLI, the HTTP service
//! and the C ABI all go through this type so their outputs agree.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::{load_oracle_skipping, OracleTable, ORACLE_FILE};
use crate::error::{Error, Result};
use crate::metrics::{RelevanceProvider, TableRelevance};
use crate::retrieval::{Action, GammaSweep, RetrievalQuery, Retriever, SequenceExport};
use crate::trainer::{load_checkpoint, ModelBundle};

/// Retrieval request by external ids, shared by `retrieve` and `POST /retrieve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveRequest {
    pub item_id: String,
    pub attribute: String,
    pub action: Action,
    #[serde(default = "default_gamma")]
    pub gamma_start: f64,
    #[serde(default = "default_gamma")]
    pub gamma_step: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_gamma() -> f64 {
    GammaSweep::default().start
}

fn default_steps() -> usize {
    GammaSweep::default().count
}

fn default_top_k() -> usize {
    1
}

impl RetrieveRequest {
    pub fn new(item_id: &str, attribute: &str, action: Action) -> Self {
        RetrieveRequest {
            item_id: item_id.to_string(),
            attribute: attribute.to_string(),
            action,
            gamma_start: default_gamma(),
            gamma_step: default_gamma(),
            steps: default_steps(),
            top_k: default_top_k(),
        }
    }

    pub fn sweep(&self) -> GammaSweep {
        GammaSweep {
            start: self.gamma_start,
            step: self.gamma_step,
            count: self.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub id: String,
    pub index: usize,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub items: usize,
    pub attributes: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: ModelInfo,
}

/// `path` itself when it is a file, `path/oracle.tsv` when it is a directory.
pub fn resolve_oracle_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(ORACLE_FILE)
    } else {
        path.to_path_buf()
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    bundle: ModelBundle,
    retriever: Retriever,
    relevance: Option<TableRelevance>,
}

impl Engine {
    /// Loads a checkpoint and, optionally, an oracle file (or a data directory holding one).
    pub fn open(checkpoint: &Path, oracle: Option<&Path>) -> Result<Engine> {
        let bundle = load_checkpoint(checkpoint)?;
        let oracle = match oracle {
            Some(p) => Some(load_oracle_skipping(
                &resolve_oracle_path(p),
                &bundle.items,
                &bundle.catalog,
                &bundle.dropped_attributes,
            )?),
            None => None,
        };
        Engine::from_bundle(bundle, oracle)
    }

    pub fn from_bundle(bundle: ModelBundle, oracle: Option<OracleTable>) -> Result<Engine> {
        let retriever = bundle.retriever()?;
        if let Some(o) = &oracle {
            if o.num_items() != retriever.num_items() || o.num_attributes() != retriever.num_attributes() {
                return Err(Error::Shape {
                    op: "oracle vs checkpoint",
                    left: vec![o.num_items(), o.num_attributes()],
                    right: vec![retriever.num_items(), retriever.num_attributes()],
                });
            }
        }
        Ok(Engine {
            bundle,
            retriever,
            relevance: oracle.map(TableRelevance::oracle),
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn retriever(&self) -> &Retriever {
        &self.retriever
    }

    pub fn oracle(&self) -> Option<&OracleTable> {
        self.relevance.as_ref().map(|r| r.values())
    }

    pub fn num_items(&self) -> usize {
        self.retriever.num_items()
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            model: ModelInfo {
                items: self.retriever.num_items(),
                attributes: self.retriever.num_attributes(),
                dim: self.retriever.latent_dim(),
            },
        }
    }

    pub fn item_index(&self, id: &str) -> Result<usize> {
        self.bundle.items.index(id).ok_or_else(|| Error::NotFound {
            kind: "item",
            id: id.to_string(),
        })
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        if let Some(t) = self.bundle.catalog.attributes().index(name) {
            return Ok(t);
        }
        if self.bundle.dropped_attributes.iter().any(|d| d == name) {
            return Err(Error::DroppedAttribute(name.to_string()));
        }
        Err(Error::NotFound {
            kind: "attribute",
            id: name.to_string(),
        })
    }

    pub fn item(&self, index: usize) -> ItemSummary {
        let catalog = &self.bundle.catalog;
        ItemSummary {
            id: self.bundle.items.id(index).to_string(),
            index,
            attributes: catalog
                .item_attributes(index)
                .iter()
                .map(|&t| catalog.name(t).to_string())
                .collect(),
        }
    }

    pub fn item_by_id(&self, id: &str) -> Result<ItemSummary> {
        Ok(self.item(self.item_index(id)?))
    }

    /// Items `offset..offset + limit` in index order, clipped at the end.
    pub fn items(&self, offset: usize, limit: usize) -> Vec<ItemSummary> {
        let end = offset.saturating_add(limit).min(self.num_items());
        (offset.min(end)..end).map(|i| self.item(i)).collect()
    }

    pub fn retrieve(&self, req: &RetrieveRequest) -> Result<SequenceExport> {
        let query = RetrievalQuery {
            item: self.item_index(&req.item_id)?,
            attribute: self.attribute_index(&req.attribute)?,
            action: req.action,
            sweep: req.sweep(),
            top_k: req.top_k,
        };
        let provider = self.relevance.as_ref().map(|r| r as &dyn RelevanceProvider);
        let seq = self.retriever.gradient_sequence(&query, provider)?;
        Ok(SequenceExport::new(&seq, &self.bundle.items, &self.bundle.catalog))
    }
}
