//! Consistency and restrictiveness of retrieved sequences.
//!
//! Relevance tracks are compared step by step. A step "rises" under action
//! `α` when `α·r_k + ε < α·r_{k+1}` and "moves" when `|r_{k+1} - r_k| > ε`.
//! Consistency is the share of rising steps on the indicated attribute and
//! restrictiveness is one minus the share of moving steps on every other
//! attribute. The literal variant keeps the signed `±1` step count of the
//! original formula and can leave `[0, 1]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datamodel::ModificationTriple;
use crate::error::{Error, Result};
use crate::retrieval::{Action, GammaSweep, RetrievalQuery, Retriever};

use super::relevance::RelevanceProvider;

fn steps(rel: &[f64]) -> Result<usize> {
    if rel.len() < 2 {
        return Err(Error::data(format!(
            "a relevance track needs at least 2 entries, got {}",
            rel.len()
        )));
    }
    Ok(rel.len() - 1)
}

fn rises(a: f64, b: f64, alpha: f64, eps: f64) -> bool {
    alpha * a + eps < alpha * b
}

pub fn consistency_score(rel: &[f64], alpha: f64, eps: f64) -> Result<f64> {
    let n = steps(rel)?;
    let up = rel.windows(2).filter(|w| rises(w[0], w[1], alpha, eps)).count();
    Ok(up as f64 / n as f64)
}

pub fn leakage_score(rel: &[f64], eps: f64) -> Result<f64> {
    let n = steps(rel)?;
    let moved = rel.windows(2).filter(|w| (w[1] - w[0]).abs() > eps).count();
    Ok(moved as f64 / n as f64)
}

pub fn restrictiveness_score(rel: &[f64], eps: f64) -> Result<f64> {
    Ok(1.0 - leakage_score(rel, eps)?)
}

/// `1 - mean_k f(α·r_k < α·r_{k+1})` with `f(true) = 1`, `f(false) = -1`.
pub fn literal_restrictiveness_score(rel: &[f64], alpha: f64, eps: f64) -> Result<f64> {
    let n = steps(rel)?;
    let signed: f64 = rel
        .windows(2)
        .map(|w| if rises(w[0], w[1], alpha, eps) { 1.0 } else { -1.0 })
        .sum();
    Ok(1.0 - signed / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub consistency: f64,
    /// Mean restrictiveness over the other attributes.
    pub restrictiveness: f64,
    pub score: f64,
    pub literal_restrictiveness: f64,
    pub literal_score: f64,
}

/// Scores one sequence from its `[L][T]` relevance matrix.
pub fn score_relevance(rel: &[Vec<f64>], attribute: usize, alpha: f64, eps: f64) -> Result<QueryScore> {
    let t_count = rel.first().map(|r| r.len()).unwrap_or(0);
    if attribute >= t_count || rel.iter().any(|r| r.len() != t_count) {
        return Err(Error::data("relevance rows must cover every attribute"));
    }
    let track = |t: usize| -> Vec<f64> { rel.iter().map(|r| r[t]).collect() };
    let consistency = consistency_score(&track(attribute), alpha, eps)?;
    let others: Vec<usize> = (0..t_count).filter(|&t| t != attribute).collect();
    let (mut r_sum, mut lit_sum) = (0.0, 0.0);
    for &t in &others {
        let tr = track(t);
        r_sum += restrictiveness_score(&tr, eps)?;
        lit_sum += literal_restrictiveness_score(&tr, alpha, eps)?;
    }
    // with a single attribute nothing else can leak
    let restrictiveness = if others.is_empty() { 1.0 } else { r_sum / others.len() as f64 };
    let literal_restrictiveness = if others.is_empty() { 1.0 } else { lit_sum / others.len() as f64 };
    Ok(QueryScore {
        consistency,
        restrictiveness,
        score: consistency * restrictiveness,
        literal_restrictiveness,
        literal_score: consistency * (1.0 - lit_sum / t_count as f64),
    })
}

/// An `(item, α·t)` test query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MgsQuery {
    pub item: usize,
    pub attribute: usize,
    pub gain: i8,
}

impl MgsQuery {
    pub fn action(&self) -> Action {
        Action::from_gain(self.gain)
    }
}

/// Distinct `(reference, attribute, direction)` queries of `triples`, sorted.
pub fn mgs_queries(triples: &[ModificationTriple]) -> Vec<MgsQuery> {
    let set: BTreeSet<MgsQuery> = triples
        .iter()
        .map(|t| MgsQuery {
            item: t.reference,
            attribute: t.attribute(),
            gain: t.gain(),
        })
        .collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgsSummary {
    pub mgs: f64,
    pub mgs_c: f64,
    pub mgs_r: f64,
    pub queries: usize,
    pub literal_mgs: f64,
    pub literal_mgs_r: f64,
}

pub fn summarize(scores: &[QueryScore]) -> Result<MgsSummary> {
    if scores.is_empty() {
        return Err(Error::data("no gradient queries to score"));
    }
    let n = scores.len() as f64;
    let mean = |f: fn(&QueryScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(MgsSummary {
        mgs: mean(|s| s.score),
        mgs_c: mean(|s| s.consistency),
        mgs_r: mean(|s| s.restrictiveness),
        queries: scores.len(),
        literal_mgs: mean(|s| s.literal_score),
        literal_mgs_r: mean(|s| s.literal_restrictiveness),
    })
}

pub fn query_scores(
    retriever: &Retriever,
    queries: &[MgsQuery],
    provider: &dyn RelevanceProvider,
    sweep: GammaSweep,
    eps: f64,
) -> Result<Vec<QueryScore>> {
    if sweep.count < 2 {
        return Err(Error::Config("gradient scores need a sweep of at least 2 steps".into()));
    }
    queries
        .iter()
        .map(|q| {
            let rq = RetrievalQuery {
                item: q.item,
                attribute: q.attribute,
                action: q.action(),
                sweep,
                top_k: 1,
            };
            let seq = retriever.gradient_sequence(&rq, Some(provider))?;
            let rel: Vec<Vec<f64>> = seq
                .entries
                .into_iter()
                .map(|e| e.relevance.expect("provider supplied"))
                .collect();
            score_relevance(&rel, q.attribute, q.action().sign(), eps)
        })
        .collect()
}

pub fn mean_gradient_score(
    retriever: &Retriever,
    queries: &[MgsQuery],
    provider: &dyn RelevanceProvider,
    sweep: GammaSweep,
    eps: f64,
) -> Result<MgsSummary> {
    summarize(&query_scores(retriever, queries, provider, sweep, eps)?)
}
