//! Adam over the joint objective, history tracking and checkpoints.

mod adam;
mod checkpoint;

use std::fmt::Write as _;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, load_manifest, save_checkpoint, BlockEntry, CatalogSnapshot, CheckpointParts, Manifest,
    ModelBundle, FORMAT_VERSION, MAGIC, MANIFEST_FILE, PARAMS_FILE, WORD_VECTORS_BLOCK,
};

use crate::datamodel::{split_triples, Dataset, ModificationTriple, TripleSplit};
use crate::error::{Error, Result};
use crate::metrics::{hit_at_k, target_ranks};
use crate::model::{init_params, Dims, ModelConfig};
use crate::numerics::{ParamSet, Tensor};
use crate::objective::{
    total_objective, total_value_and_grad, LossBreakdown, LossConfig, ObjectiveInputs, TripleBatch, UserBatch,
    Vocabulary,
};
use crate::retrieval::Retriever;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub user_batch_size: usize,
    pub triple_batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// History rows are written every this many steps, plus the last step.
    pub eval_every: u64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            user_batch_size: 50,
            triple_batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 100,
            test_fraction: 0.2,
            split_seed: 0,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.user_batch_size == 0 || self.triple_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        self.adam.validate()?;
        self.loss.validate()?;
        self.model.validate()
    }

    pub fn split(&self, triples: &[ModificationTriple]) -> Result<TripleSplit> {
        split_triples(triples, self.test_fraction, self.split_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub loss: LossBreakdown,
    pub hit20: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

pub const HISTORY_HEADER: &str = "step,recon,kl,align,asl,psl,total,hit20,beta_eff";

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.rows {
            let l = &r.loss;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.step, l.recon, l.kl, l.align, l.asl, l.psl, l.total, r.hit20, l.beta_eff
            )
            .unwrap();
        }
        out
    }

    pub fn first(&self) -> Option<&HistoryRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub history: TrainHistory,
    pub split: TripleSplit,
    pub steps: u64,
    pub rng_word_pos: u128,
    pub dims: Dims,
}

impl TrainOutcome {
    pub fn checkpoint_parts<'a>(&'a self, data: &'a Dataset, config: &'a TrainConfig) -> CheckpointParts<'a> {
        CheckpointParts {
            params: &self.params,
            lexicon: &data.lexicon,
            items: data.interactions.items(),
            catalog: &data.catalog,
            dropped_attributes: &data.dropped_attributes,
            config,
            step: self.steps,
            rng_word_pos: self.rng_word_pos,
        }
    }
}

pub fn dims_for(data: &Dataset, model: &ModelConfig) -> Dims {
    Dims {
        num_items: data.num_items(),
        hidden_dim: model.hidden_dim,
        latent_dim: model.latent_dim,
        word_dim: data.lexicon.vectors.cols(),
    }
}

/// Deterministic full-data evaluation used for history rows: every user at
/// the posterior mean and every training triple.
struct Monitor<'a> {
    users: UserBatch,
    triples: TripleBatch,
    test: &'a [ModificationTriple],
}

impl Monitor<'_> {
    fn row(&self, step: u64, params: &ParamSet, data: &Dataset, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<HistoryRow> {
        let inp = ObjectiveInputs {
            vocab,
            users: &self.users,
            noise: None,
            triples: &self.triples,
            loss: &cfg.loss,
            model: &cfg.model,
            step,
        };
        let loss = total_objective(params, &inp).map_err(|e| numerical(step, e))?;
        let retriever = Retriever::new(params, &data.lexicon)?;
        let hit20 = hit_at_k(&target_ranks(&retriever, self.test)?, 20)?;
        Ok(HistoryRow { step, loss, hit20 })
    }
}

fn numerical(step: u64, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Numerical {
            step,
            detail: format!("non-finite value in `{op}`"),
        },
        other => other,
    }
}

pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_from(data, cfg, None)
}

/// Trains from `init` when given, otherwise from a fresh initialization.
pub fn train_from(data: &Dataset, cfg: &TrainConfig, init: Option<ParamSet>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_users = data.interactions.num_users();
    if n_users == 0 {
        return Err(Error::data("no users to train on"));
    }
    let split = cfg.split(&data.triples())?;
    let dims = dims_for(data, &cfg.model);
    let mut params = match init {
        Some(p) => {
            crate::model::check_layout(&p, dims)?;
            p
        }
        None => init_params(dims, &cfg.model),
    };
    let vocab = Vocabulary::new(&data.lexicon)?;
    let t_count = data.catalog.num_attributes();

    let all_users: Vec<usize> = (0..n_users).collect();
    let train_refs: Vec<&ModificationTriple> = split.train.iter().collect();
    let monitor = Monitor {
        users: UserBatch::new(&data.interactions, &all_users)?,
        triples: TripleBatch::new(&train_refs, t_count)?,
        test: &split.test,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let steps_per_epoch = n_users.div_ceil(cfg.user_batch_size);
    let total_steps = (cfg.epochs * steps_per_epoch) as u64;
    info!(
        "training {} users, {} items, {} train / {} test triples, {} steps",
        n_users,
        data.num_items(),
        split.train.len(),
        split.test.len(),
        total_steps
    );

    history.rows.push(monitor.row(0, &params, data, &vocab, cfg)?);
    let mut triple_order: Vec<usize> = (0..split.train.len()).collect();
    let mut triple_pos = triple_order.len();
    let mut user_order = all_users.clone();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        user_order.shuffle(&mut rng);
        for chunk in user_order.chunks(cfg.user_batch_size) {
            let users = UserBatch::new(&data.interactions, chunk)?;
            let noise: Vec<f64> = (0..chunk.len() * dims.latent_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let noise = Tensor::matrix(chunk.len(), dims.latent_dim, noise)?;

            let mut picked = Vec::with_capacity(cfg.triple_batch_size);
            while picked.len() < cfg.triple_batch_size.min(triple_order.len()) {
                if triple_pos == triple_order.len() {
                    triple_order.shuffle(&mut rng);
                    triple_pos = 0;
                }
                picked.push(&split.train[triple_order[triple_pos]]);
                triple_pos += 1;
            }
            let triples = TripleBatch::new(&picked, t_count)?;

            let inp = ObjectiveInputs {
                vocab: &vocab,
                users: &users,
                noise: Some(&noise),
                triples: &triples,
                loss: &cfg.loss,
                model: &cfg.model,
                step,
            };
            let (loss, grads) = total_value_and_grad(&params, &inp).map_err(|e| numerical(step, e))?;
            if !loss.is_finite() {
                return Err(Error::Numerical {
                    step,
                    detail: format!("{loss:?}"),
                });
            }
            adam_step(&mut params, &grads, &mut state, &cfg.adam)?;
            if params.iter().any(|(_, t)| !t.data().iter().all(|v| v.is_finite())) {
                return Err(Error::Numerical {
                    step,
                    detail: format!("parameters became non-finite after update; loss {loss:?}"),
                });
            }
            step += 1;
            if step % cfg.eval_every == 0 || step == total_steps {
                let row = monitor.row(step, &params, data, &vocab, cfg)?;
                debug!("epoch {epoch} step {step}: {:?} hit20 {}", row.loss, row.hit20);
                history.rows.push(row);
            }
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        split,
        steps: step,
        rng_word_pos: rng.get_word_pos(),
        dims,
    })
}
