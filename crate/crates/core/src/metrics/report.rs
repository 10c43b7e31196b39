use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{AttributeCatalog, ModificationTriple, OracleTable};
use crate::error::{Error, Result};
use crate::retrieval::{GammaSweep, Retriever};

use super::gradient::{mean_gradient_score, mgs_queries};
use super::independence::independence_level;
use super::ranking::{hit_at_k, mrr, target_ranks};
use super::relevance::{OccurrenceRelevance, RelevanceKind, RelevanceProvider, TableRelevance};

/// Which relevance source evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceChoice {
    /// The dataset's relevance table when it has one, occurrence otherwise.
    #[default]
    Auto,
    Table,
    Occurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub hit_ks: Vec<usize>,
    pub sweep: GammaSweep,
    /// Relevance tie tolerance; the provider's default when unset.
    pub tie_tolerance: Option<f64>,
    pub literal_mode: bool,
    pub relevance: RelevanceChoice,
    pub occurrence_pool: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            hit_ks: vec![10, 20, 50],
            sweep: GammaSweep::default(),
            tie_tolerance: None,
            literal_mode: false,
            relevance: RelevanceChoice::Auto,
            occurrence_pool: 100,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hit_ks.is_empty() || self.hit_ks.contains(&0) {
            return Err(Error::Config("hit_ks must list positive cut-offs".into()));
        }
        if let Some(e) = self.tie_tolerance {
            if !(e >= 0.0) {
                return Err(Error::Config(format!("tie_tolerance must be >= 0, got {e}")));
            }
        }
        if self.occurrence_pool == 0 {
            return Err(Error::Config("occurrence_pool must be positive".into()));
        }
        if self.sweep.count < 2 {
            return Err(Error::Config("metric sweeps need at least 2 steps".into()));
        }
        self.sweep.validate()
    }

    pub fn tolerance_for(&self, kind: RelevanceKind) -> f64 {
        self.tie_tolerance.unwrap_or(kind.default_tolerance())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiteralScores {
    pub mgs: f64,
    pub mgs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Keyed `hit@K`.
    pub hit: BTreeMap<String, f64>,
    pub mrr: f64,
    pub mgs: f64,
    pub mgs_c: f64,
    pub mgs_r: f64,
    pub ind_level: f64,
    /// Ranked test triples.
    pub triples: usize,
    /// Distinct gradient queries.
    pub queries: usize,
    pub relevance: RelevanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal: Option<LiteralScores>,
}

impl EvalReport {
    pub fn hit_at(&self, k: usize) -> Option<f64> {
        self.hit.get(&format!("hit@{k}")).copied()
    }
}

/// Resolves `choice` against what is available. `Table` without a table is a
/// configuration error; `Auto` falls back to occurrence relevance.
pub fn select_provider(
    choice: RelevanceChoice,
    oracle: Option<OracleTable>,
    retriever: &Retriever,
    catalog: &AttributeCatalog,
    pool: usize,
) -> Result<Box<dyn RelevanceProvider>> {
    match (choice, oracle) {
        (RelevanceChoice::Auto | RelevanceChoice::Table, Some(o)) => Ok(Box::new(TableRelevance::oracle(o))),
        (RelevanceChoice::Table, None) => Err(Error::Config(
            "relevance = table needs an oracle/relevance file".into(),
        )),
        (RelevanceChoice::Auto | RelevanceChoice::Occurrence, _) => {
            Ok(Box::new(OccurrenceRelevance::new(retriever.clone(), catalog.clone(), pool)?))
        }
    }
}

pub fn evaluate(
    retriever: &Retriever,
    test: &[ModificationTriple],
    provider: &dyn RelevanceProvider,
    config: &MetricConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let ranks = target_ranks(retriever, test)?;
    let mut hit = BTreeMap::new();
    for &k in &config.hit_ks {
        hit.insert(format!("hit@{k}"), hit_at_k(&ranks, k)?);
    }
    let queries = mgs_queries(test);
    let eps = config.tolerance_for(provider.kind());
    let mgs = mean_gradient_score(retriever, &queries, provider, config.sweep, eps)?;
    Ok(EvalReport {
        hit,
        mrr: mrr(&ranks)?,
        mgs: mgs.mgs,
        mgs_c: mgs.mgs_c,
        mgs_r: mgs.mgs_r,
        ind_level: independence_level(retriever.item_table())?,
        triples: ranks.len(),
        queries: mgs.queries,
        relevance: provider.kind(),
        literal: config.literal_mode.then_some(LiteralScores {
            mgs: mgs.literal_mgs,
            mgs_r: mgs.literal_mgs_r,
        }),
    })
}

/// One row of a hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub rho: f64,
    pub seed: u64,
    pub report: EvalReport,
}

pub const SWEEP_CSV_HEADER: &str = "beta,rho,seed,ind_level,mgs,mgs_c,mgs_r,mrr,hit20";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let hit20 = r.report.hit_at(20).map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.beta, r.rho, r.seed, r.report.ind_level, r.report.mgs, r.report.mgs_c, r.report.mgs_r, r.report.mrr, hit20
        ));
    }
    out
}
