use serde::{Deserialize, Serialize};

use crate::datamodel::{AttributeCatalog, OracleTable};
use crate::error::{Error, Result};
use crate::retrieval::{rank_scores, Retriever};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceKind {
    /// Ground-truth relevance of a synthetic world.
    Oracle,
    /// Graded relevance loaded from a file.
    Table,
    /// Share of the top-`pool` items for the step's query that carry the attribute.
    Occurrence,
}

impl RelevanceKind {
    pub fn default_tolerance(self) -> f64 {
        match self {
            RelevanceKind::Oracle | RelevanceKind::Table => 1e-9,
            RelevanceKind::Occurrence => 0.0,
        }
    }
}

/// What a relevance lookup may depend on: the retrieved item, and for the
/// occurrence heuristic the query vector and reference that produced it.
#[derive(Debug, Clone, Copy)]
pub struct RelevanceContext<'a> {
    pub reference: usize,
    pub item: usize,
    pub query: &'a [f64],
}

pub trait RelevanceProvider: Send + Sync {
    fn kind(&self) -> RelevanceKind;
    fn num_attributes(&self) -> usize;
    /// One value per attribute.
    fn relevances(&self, ctx: &RelevanceContext<'_>) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct TableRelevance {
    table: OracleTable,
    kind: RelevanceKind,
}

impl TableRelevance {
    pub fn oracle(table: OracleTable) -> Self {
        TableRelevance {
            table,
            kind: RelevanceKind::Oracle,
        }
    }

    pub fn table(table: OracleTable) -> Self {
        TableRelevance {
            table,
            kind: RelevanceKind::Table,
        }
    }

    pub fn values(&self) -> &OracleTable {
        &self.table
    }
}

impl RelevanceProvider for TableRelevance {
    fn kind(&self) -> RelevanceKind {
        self.kind
    }

    fn num_attributes(&self) -> usize {
        self.table.num_attributes()
    }

    fn relevances(&self, ctx: &RelevanceContext<'_>) -> Result<Vec<f64>> {
        (0..self.table.num_attributes())
            .map(|t| {
                self.table.get(ctx.item, t).ok_or_else(|| Error::NotFound {
                    kind: "item index",
                    id: ctx.item.to_string(),
                })
            })
            .collect()
    }
}

/// Fraction of the top-`pool` items for `query` (reference excluded) that
/// carry `attribute`.
pub fn occurrence_relevance(
    retriever: &Retriever,
    catalog: &AttributeCatalog,
    query: &[f64],
    reference: usize,
    attribute: usize,
    pool: usize,
) -> Result<f64> {
    let all = occurrence_all(retriever, catalog, query, reference, pool)?;
    all.get(attribute).copied().ok_or_else(|| Error::NotFound {
        kind: "attribute index",
        id: attribute.to_string(),
    })
}

fn occurrence_all(
    retriever: &Retriever,
    catalog: &AttributeCatalog,
    query: &[f64],
    reference: usize,
    pool: usize,
) -> Result<Vec<f64>> {
    if pool == 0 || pool > retriever.num_items() {
        return Err(Error::Config(format!(
            "occurrence pool must be in 1..={}, got {pool}",
            retriever.num_items()
        )));
    }
    let top = rank_scores(&retriever.scores(query), &[reference], pool);
    let mut counts = vec![0usize; catalog.num_attributes()];
    for r in &top {
        for &t in catalog.item_attributes(r.item) {
            counts[t] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / top.len() as f64).collect())
}

#[derive(Debug, Clone)]
pub struct OccurrenceRelevance {
    retriever: Retriever,
    catalog: AttributeCatalog,
    pool: usize,
}

impl OccurrenceRelevance {
    pub fn new(retriever: Retriever, catalog: AttributeCatalog, pool: usize) -> Result<Self> {
        if catalog.num_items() != retriever.num_items() {
            return Err(Error::data(format!(
                "catalog has {} items but the model has {}",
                catalog.num_items(),
                retriever.num_items()
            )));
        }
        if pool == 0 {
            return Err(Error::Config("occurrence pool must be positive".into()));
        }
        // the reference is excluded, so at most M - 1 candidates exist
        let pool = pool.min(retriever.num_items().saturating_sub(1).max(1));
        Ok(OccurrenceRelevance {
            retriever,
            catalog,
            pool,
        })
    }

    pub fn pool(&self) -> usize {
        self.pool
    }
}

impl RelevanceProvider for OccurrenceRelevance {
    fn kind(&self) -> RelevanceKind {
        RelevanceKind::Occurrence
    }

    fn num_attributes(&self) -> usize {
        self.catalog.num_attributes()
    }

    fn relevances(&self, ctx: &RelevanceContext<'_>) -> Result<Vec<f64>> {
        occurrence_all(&self.retriever, &self.catalog, ctx.query, ctx.reference, self.pool)
    }
}
