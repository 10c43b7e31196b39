use crate::datamodel::ModificationTriple;
use crate::error::{Error, Result};
use crate::retrieval::Retriever;

fn non_empty(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::data("no test queries to evaluate"));
    }
    if ranks.contains(&0) {
        return Err(Error::data("ranks are 1-based"));
    }
    Ok(())
}

/// Fraction of queries whose target ranks within the top `k`.
pub fn hit_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    non_empty(ranks)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    non_empty(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

pub fn target_ranks(retriever: &Retriever, triples: &[ModificationTriple]) -> Result<Vec<usize>> {
    triples.iter().map(|t| retriever.target_rank(t)).collect()
}

/// Ranks under a popularity ordering that ignores the modification:
/// most-adopted first, ties by index, reference excluded.
pub fn popularity_ranks(popularity: &[usize], triples: &[ModificationTriple]) -> Result<Vec<usize>> {
    triples
        .iter()
        .map(|tr| {
            let p = *popularity.get(tr.target).ok_or_else(|| Error::NotFound {
                kind: "item index",
                id: tr.target.to_string(),
            })?;
            let ahead = popularity
                .iter()
                .enumerate()
                .filter(|&(j, &q)| j != tr.reference && j != tr.target && (q > p || (q == p && j < tr.target)))
                .count();
            Ok(ahead + 1)
        })
        .collect()
}
