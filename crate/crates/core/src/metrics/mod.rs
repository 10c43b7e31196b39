//! Retrieval quality, gradient-sequence scores and representation independence.

mod gradient;
mod independence;
mod ranking;
mod relevance;
mod report;

pub use gradient::{
    consistency_score, leakage_score, literal_restrictiveness_score, mean_gradient_score, mgs_queries,
    query_scores, restrictiveness_score, score_relevance, summarize, MgsQuery, MgsSummary, QueryScore,
};
pub use independence::independence_level;
pub use ranking::{hit_at_k, mrr, popularity_ranks, target_ranks};
pub use relevance::{
    occurrence_relevance, OccurrenceRelevance, RelevanceContext, RelevanceKind, RelevanceProvider, TableRelevance,
};
pub use report::{
    evaluate, select_provider, sweep_csv, EvalReport, LiteralScores, MetricConfig, RelevanceChoice, SweepRow, SWEEP_CSV_HEADER,
};
