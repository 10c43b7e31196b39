//! Ranking over a frozen item table and γ-swept gradient sequences.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{AttributeCatalog, IdMap, Lexicon, ModificationTriple};
use crate::error::{Error, Result};
use crate::metrics::{RelevanceContext, RelevanceProvider};
use crate::model::{attribute_vectors, blocks, build_query, modification_vector};
use crate::numerics::{dot, ParamSet, Tensor};

/// Direction of a modification: "more" is `+1`, "less" is `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    More,
    Less,
}

impl Action {
    pub fn sign(self) -> f64 {
        match self {
            Action::More => 1.0,
            Action::Less => -1.0,
        }
    }

    pub fn from_gain(gain: i8) -> Action {
        if gain > 0 {
            Action::More
        } else {
            Action::Less
        }
    }

    pub fn flipped(self) -> Action {
        match self {
            Action::More => Action::Less,
            Action::Less => Action::More,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::More => "more",
            Action::Less => "less",
        })
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "more" | "+" | "+1" => Ok(Action::More),
            "less" | "-" | "-1" => Ok(Action::Less),
            other => Err(Error::Usage(format!("action must be `more` or `less`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSweep {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Default for GammaSweep {
    fn default() -> Self {
        GammaSweep {
            start: 0.1,
            step: 0.1,
            count: 10,
        }
    }
}

impl GammaSweep {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Usage("the sweep needs at least one step".into()));
        }
        if !(self.start >= 0.0 && self.start.is_finite()) {
            return Err(Error::Usage(format!("gamma start must be finite and >= 0, got {}", self.start)));
        }
        if self.count > 1 && !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Usage(format!("gamma step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    /// `start + k·step` for `k = 0..count`.
    pub fn gammas(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalQuery {
    pub item: usize,
    pub attribute: usize,
    pub action: Action,
    pub sweep: GammaSweep,
    /// Candidates reported per step; the sequence itself keeps the top one.
    pub top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub item: usize,
    pub score: f64,
}

/// Top `k` of `scores` in descending order, ties by ascending index, with
/// `exclude` removed. Returns fewer than `k` when not enough items remain.
pub fn rank_scores(scores: &[f64], exclude: &[usize], k: usize) -> Vec<Ranked> {
    let mut cand: Vec<Ranked> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .map(|(item, &score)| Ranked { item, score })
        .collect();
    let order = |a: &Ranked, b: &Ranked| b.score.total_cmp(&a.score).then(a.item.cmp(&b.item));
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(order);
    cand
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub gamma: f64,
    pub item: usize,
    pub score: f64,
    /// Relevance of the retrieved item to every attribute, when a provider is given.
    pub relevance: Option<Vec<f64>>,
    /// The `top_k` candidates of this step, best first.
    pub top: Vec<Ranked>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSequence {
    pub query: RetrievalQuery,
    pub entries: Vec<SequenceEntry>,
}

impl GradientSequence {
    /// Relevance of each entry to attribute `t`; `None` without a provider.
    pub fn relevance_track(&self, t: usize) -> Option<Vec<f64>> {
        self.entries.iter().map(|e| e.relevance.as_ref().map(|r| r[t])).collect()
    }

    pub fn items(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.item).collect()
    }
}

/// Item table and attribute vectors of a frozen model.
#[derive(Debug, Clone)]
pub struct Retriever {
    items: Tensor,
    attributes: Tensor,
}

impl Retriever {
    pub fn new(params: &ParamSet, lexicon: &Lexicon) -> Result<Self> {
        let items = params
            .get(blocks::ITEMS)
            .ok_or_else(|| Error::Checkpoint("missing item table".into()))?
            .clone();
        Ok(Retriever {
            items,
            attributes: attribute_vectors(params, lexicon)?,
        })
    }

    /// Builds from precomputed parts; `attributes` is `[T, D]`.
    pub fn from_parts(items: Tensor, attributes: Tensor) -> Result<Self> {
        if items.cols() != attributes.cols() {
            return Err(Error::Shape {
                op: "retriever",
                left: items.shape().to_vec(),
                right: attributes.shape().to_vec(),
            });
        }
        Ok(Retriever { items, attributes })
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.items.cols()
    }

    pub fn item_table(&self) -> &Tensor {
        &self.items
    }

    pub fn attribute_table(&self) -> &Tensor {
        &self.attributes
    }

    pub fn item_vector(&self, i: usize) -> &[f64] {
        self.items.row_slice(i)
    }

    /// `H · query`.
    pub fn scores(&self, query: &[f64]) -> Vec<f64> {
        (0..self.items.rows()).map(|i| dot(self.items.row_slice(i), query)).collect()
    }

    pub fn rank_items(&self, query: &[f64], exclude: &[usize], k: usize) -> Vec<Ranked> {
        rank_scores(&self.scores(query), exclude, k)
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.num_items() {
            return Err(Error::NotFound {
                kind: "item index",
                id: i.to_string(),
            });
        }
        Ok(())
    }

    fn check_attribute(&self, t: usize) -> Result<()> {
        if t >= self.num_attributes() {
            return Err(Error::NotFound {
                kind: "attribute index",
                id: t.to_string(),
            });
        }
        Ok(())
    }

    /// `h_i + γ Σ gain_t F(t)`.
    pub fn query_vector(&self, item: usize, gains: &[(usize, f64)], gamma: f64) -> Result<Vec<f64>> {
        self.check_item(item)?;
        for &(t, _) in gains {
            self.check_attribute(t)?;
        }
        let m = modification_vector(&self.attributes, gains);
        Ok(build_query(self.item_vector(item), &m, gamma))
    }

    /// 1-based rank of the target under the γ = 1 query, reference excluded.
    pub fn target_rank(&self, triple: &ModificationTriple) -> Result<usize> {
        self.check_item(triple.target)?;
        let gains: Vec<(usize, f64)> = triple.diff.entries().iter().map(|&(t, y)| (t, -(y as f64))).collect();
        let q = self.query_vector(triple.reference, &gains, 1.0)?;
        let scores = self.scores(&q);
        let st = scores[triple.target];
        let ahead = scores
            .iter()
            .enumerate()
            .filter(|&(j, &s)| {
                j != triple.reference && j != triple.target && (s > st || (s == st && j < triple.target))
            })
            .count();
        Ok(ahead + 1)
    }

    pub fn gradient_sequence(
        &self,
        query: &RetrievalQuery,
        provider: Option<&dyn RelevanceProvider>,
    ) -> Result<GradientSequence> {
        query.sweep.validate()?;
        if query.top_k == 0 {
            return Err(Error::Usage("top_k must be at least 1".into()));
        }
        self.check_item(query.item)?;
        self.check_attribute(query.attribute)?;
        if self.num_items() < 2 {
            return Err(Error::data("retrieval needs at least two items"));
        }
        let gains = [(query.attribute, query.action.sign())];
        let mut entries = Vec::with_capacity(query.sweep.count);
        for gamma in query.sweep.gammas() {
            let q = self.query_vector(query.item, &gains, gamma)?;
            let top = self.rank_items(&q, &[query.item], query.top_k);
            let best = top[0];
            let relevance = match provider {
                Some(p) => Some(p.relevances(&RelevanceContext {
                    reference: query.item,
                    item: best.item,
                    query: &q,
                })?),
                None => None,
            };
            entries.push(SequenceEntry {
                gamma,
                item: best.item,
                score: best.score,
                relevance,
                top,
            });
        }
        Ok(GradientSequence {
            query: *query,
            entries,
        })
    }
}

/// `{query:{item,attribute,action,gammas[]}, entries:[{gamma,item,score,relevance:{attr:val}}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceExport {
    pub query: QueryExport,
    pub entries: Vec<EntryExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryExport {
    pub item: String,
    pub attribute: String,
    pub action: Action,
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryExport {
    pub gamma: f64,
    pub item: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<BTreeMap<String, f64>>,
    /// Present when more than one candidate per step was requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top: Vec<CandidateExport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateExport {
    pub item: String,
    pub score: f64,
}

impl SequenceExport {
    pub fn new(seq: &GradientSequence, items: &IdMap, catalog: &AttributeCatalog) -> Self {
        let q = &seq.query;
        SequenceExport {
            query: QueryExport {
                item: items.id(q.item).to_string(),
                attribute: catalog.name(q.attribute).to_string(),
                action: q.action,
                gammas: seq.entries.iter().map(|e| e.gamma).collect(),
            },
            entries: seq
                .entries
                .iter()
                .map(|e| EntryExport {
                    gamma: e.gamma,
                    item: items.id(e.item).to_string(),
                    score: e.score,
                    relevance: e.relevance.as_ref().map(|r| {
                        r.iter()
                            .enumerate()
                            .map(|(t, &v)| (catalog.name(t).to_string(), v))
                            .collect()
                    }),
                    top: if q.top_k > 1 {
                        e.top
                            .iter()
                            .map(|c| CandidateExport {
                                item: items.id(c.item).to_string(),
                                score: c.score,
                            })
                            .collect()
                    } else {
                        Vec::new()
                    },
                })
                .collect(),
        }
    }
}
