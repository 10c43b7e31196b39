//! Loss terms as differentiable scalars over the model parameters.
//!
//! `total = -recon + β_eff·kl - λ_align·align + λ_sparse·(asl + psl)` is
//! minimized, with `β_eff = β·min(1, step / anneal_steps)`.

use serde::{Deserialize, Serialize};

use crate::datamodel::{InteractionMatrix, Lexicon, ModificationTriple};
use crate::error::{Error, Result};
use crate::model::{blocks, normalized_input, ModelConfig, LOG_SIGMA_CLAMP};
use crate::numerics::{value_and_grad, Bound, ParamSet, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub beta: f64,
    pub anneal_steps: u64,
    pub lambda_align: f64,
    pub lambda_sparse: f64,
    pub rho: f64,
    /// Modification strength inside the alignment term.
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.2,
            anneal_steps: 2000,
            lambda_align: 1.0,
            lambda_sparse: 1.0,
            rho: 0.1,
            gamma: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.lambda_align >= 0.0 && self.lambda_sparse >= 0.0) {
            return Err(Error::Config("beta, lambda_align and lambda_sparse must be non-negative".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must be in (0, 1), got {}", self.rho)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma must be finite".into()));
        }
        Ok(())
    }

    pub fn beta_at(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 {
            return self.beta;
        }
        self.beta * (step as f64 / self.anneal_steps as f64).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub align: f64,
    pub asl: f64,
    pub psl: f64,
    pub total: f64,
    pub beta_eff: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.recon, self.kl, self.align, self.asl, self.psl, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Dense encoder inputs and decoder targets for a batch of users.
#[derive(Debug, Clone)]
pub struct UserBatch {
    /// `[B, M]` rows of the L2-normalized indicator.
    pub input: Tensor,
    /// `[B, M]` binary adoptions.
    pub targets: Tensor,
}

impl UserBatch {
    pub fn new(interactions: &InteractionMatrix, users: &[usize]) -> Result<Self> {
        let rows: Vec<&[usize]> = users.iter().map(|&u| interactions.user_items(u)).collect();
        Self::from_item_lists(&rows, interactions.num_items())
    }

    pub fn from_item_lists(rows: &[&[usize]], num_items: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("empty user batch"));
        }
        let mut input = Vec::with_capacity(rows.len() * num_items);
        let mut targets = vec![0.0; rows.len() * num_items];
        for (r, items) in rows.iter().enumerate() {
            if items.is_empty() {
                return Err(Error::data("user without adoptions in batch"));
            }
            if let Some(&bad) = items.iter().find(|&&i| i >= num_items) {
                return Err(Error::NotFound {
                    kind: "item index",
                    id: bad.to_string(),
                });
            }
            input.extend(normalized_input(items, num_items));
            for &i in items.iter() {
                targets[r * num_items + i] = 1.0;
            }
        }
        Ok(UserBatch {
            input: Tensor::matrix(rows.len(), num_items, input)?,
            targets: Tensor::matrix(rows.len(), num_items, targets)?,
        })
    }

    pub fn len(&self) -> usize {
        self.input.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Modification triples with their signed attribute weights.
#[derive(Debug, Clone)]
pub struct TripleBatch {
    pub refs: Vec<usize>,
    pub targets: Vec<usize>,
    /// `[B, T]` with entry `-y^t` for every attribute in the difference.
    pub gains: Tensor,
}

impl TripleBatch {
    pub fn new(triples: &[&ModificationTriple], num_attributes: usize) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::data("empty triple batch"));
        }
        let mut gains = vec![0.0; triples.len() * num_attributes];
        for (r, tr) in triples.iter().enumerate() {
            for &(t, y) in tr.diff.entries() {
                if t >= num_attributes {
                    return Err(Error::NotFound {
                        kind: "attribute index",
                        id: t.to_string(),
                    });
                }
                gains[r * num_attributes + t] = -(y as f64);
            }
        }
        Ok(TripleBatch {
            refs: triples.iter().map(|t| t.reference).collect(),
            targets: triples.iter().map(|t| t.target).collect(),
            gains: Tensor::matrix(triples.len(), num_attributes, gains)?,
        })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }
}

/// Word vectors and the attribute sum-pooling matrix.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// `[W, K]`.
    pub vectors: Tensor,
    /// `[T, W]` token counts.
    pub pooling: Tensor,
}

impl Vocabulary {
    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        let w = lexicon.words.len();
        if w == 0 {
            return Err(Error::data("vocabulary is empty"));
        }
        let t = lexicon.attr_words.len();
        let mut pooling = vec![0.0; t * w];
        for (a, words) in lexicon.attr_words.iter().enumerate() {
            for &wi in words {
                pooling[a * w + wi] += 1.0;
            }
        }
        Ok(Vocabulary {
            vectors: lexicon.vectors.clone(),
            pooling: Tensor::matrix(t, w, pooling)?,
        })
    }

    pub fn num_attributes(&self) -> usize {
        self.pooling.rows()
    }
}

/// Posterior parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorVars {
    pub mean: Var,
    pub log_sigma: Var,
}

pub fn encoder_graph(tape: &mut Tape, b: &Bound<'_>, input: &Tensor) -> Result<PosteriorVars> {
    let x = tape.constant(input.clone());
    let pre = tape.matmul(x, b.var(blocks::W1))?;
    let pre = tape.add_row(pre, b.var(blocks::B1))?;
    let hidden = tape.tanh(pre)?;
    let mean = tape.matmul(hidden, b.var(blocks::W_MU))?;
    let mean = tape.add_row(mean, b.var(blocks::B_MU))?;
    let ls = tape.matmul(hidden, b.var(blocks::W_S))?;
    let ls = tape.add_row(ls, b.var(blocks::B_S))?;
    let log_sigma = tape.clamp(ls, -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)?;
    Ok(PosteriorVars { mean, log_sigma })
}

/// `μ + exp(log σ) ⊙ ε` when `noise` is given, otherwise `μ`.
pub fn latent_graph(tape: &mut Tape, post: PosteriorVars, noise: Option<&Tensor>) -> Result<Var> {
    match noise {
        None => Ok(post.mean),
        Some(eps) => {
            let sigma = tape.exp(post.log_sigma)?;
            let eps = tape.constant(eps.clone());
            let jitter = tape.mul(sigma, eps)?;
            tape.add(post.mean, jitter)
        }
    }
}

/// Mean over users of `Σ_{adopted} log softmax(H z_u)`.
pub fn recon_graph(tape: &mut Tape, b: &Bound<'_>, z: Var, targets: &Tensor) -> Result<Var> {
    let ht = tape.transpose(b.var(blocks::ITEMS))?;
    let logits = tape.matmul(z, ht)?;
    let lsm = tape.log_softmax_rows(logits)?;
    let x = tape.constant(targets.clone());
    let picked = tape.mul(lsm, x)?;
    let total = tape.sum(picked)?;
    tape.scale(total, 1.0 / targets.rows() as f64)
}

/// Mean over users of `½ Σ_d (μ² + σ² - 2 log σ - 1)`.
pub fn kl_graph(tape: &mut Tape, post: PosteriorVars) -> Result<Var> {
    let rows = tape.value(post.mean).rows() as f64;
    let mu2 = tape.mul(post.mean, post.mean)?;
    let two_ls = tape.scale(post.log_sigma, 2.0)?;
    let var = tape.exp(two_ls)?;
    let s = tape.add(mu2, var)?;
    let s = tape.sub(s, two_ls)?;
    let s = tape.add_scalar(s, -1.0)?;
    let total = tape.sum(s)?;
    tape.scale(total, 0.5 / rows)
}

/// Word activations `σ(V W_a + b_a)`, `[W, D]`.
pub fn word_activations_graph(tape: &mut Tape, b: &Bound<'_>, vocab: &Vocabulary) -> Result<Var> {
    let v = tape.constant(vocab.vectors.clone());
    let pre = tape.matmul(v, b.var(blocks::W_A))?;
    let pre = tape.add_row(pre, b.var(blocks::B_A))?;
    tape.sigmoid(pre)
}

/// Batch mean of `log softmax(H·query)` at each triple's target.
pub fn alignment_graph(
    tape: &mut Tape,
    b: &Bound<'_>,
    vocab: &Vocabulary,
    acts: Var,
    triples: &TripleBatch,
    gamma: f64,
) -> Result<Var> {
    let items = b.var(blocks::ITEMS);
    let m = tape.value(items).rows();
    if let Some(&bad) = triples.refs.iter().chain(&triples.targets).find(|&&i| i >= m) {
        return Err(Error::NotFound {
            kind: "item index",
            id: bad.to_string(),
        });
    }
    let pool = tape.constant(vocab.pooling.clone());
    let attr = tape.matmul(pool, acts)?;
    let gains = tape.constant(triples.gains.clone());
    let modification = tape.matmul(gains, attr)?;
    let modification = tape.scale(modification, gamma)?;
    let refs = tape.gather_rows(items, &triples.refs)?;
    let query = tape.add(refs, modification)?;
    let ht = tape.transpose(items)?;
    let scores = tape.matmul(query, ht)?;
    let lsm = tape.log_softmax_rows(scores)?;
    let mut onehot = Tensor::zeros(&[triples.len(), m]);
    for (r, &t) in triples.targets.iter().enumerate() {
        onehot.set(r, t, 1.0);
    }
    let onehot = tape.constant(onehot);
    let picked = tape.mul(lsm, onehot)?;
    let total = tape.sum(picked)?;
    tape.scale(total, 1.0 / triples.len() as f64)
}

/// `(mean_d max(mean_w f_d - ρ, 0)², mean_d mean_w f_d (1 - f_d))`.
pub fn sparsity_graph(tape: &mut Tape, acts: Var, rho: f64) -> Result<(Var, Var)> {
    let col = tape.col_mean(acts)?;
    let excess = tape.add_scalar(col, -rho)?;
    let hinge = tape.max_const(excess, 0.0)?;
    let sq = tape.mul(hinge, hinge)?;
    let asl = tape.mean(sq)?;
    let neg = tape.scale(acts, -1.0)?;
    let one_minus = tape.add_scalar(neg, 1.0)?;
    let prod = tape.mul(acts, one_minus)?;
    let psl = tape.mean(prod)?;
    Ok((asl, psl))
}

/// Per-term nodes of one objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub recon: Var,
    pub kl: Option<Var>,
    pub align: Var,
    pub sparsity: Option<(Var, Var)>,
    pub total: Var,
    pub beta_eff: f64,
}

/// Everything one objective evaluation consumes besides the parameters.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub vocab: &'a Vocabulary,
    pub users: &'a UserBatch,
    /// `[B, D]` standard-normal draws; `None` evaluates at the posterior mean.
    pub noise: Option<&'a Tensor>,
    pub triples: &'a TripleBatch,
    pub loss: &'a LossConfig,
    pub model: &'a ModelConfig,
    pub step: u64,
}

pub fn objective_graph(tape: &mut Tape, b: &Bound<'_>, inp: &ObjectiveInputs<'_>) -> Result<ObjectiveVars> {
    let post = encoder_graph(tape, b, &inp.users.input)?;
    let noise = if inp.model.variational { inp.noise } else { None };
    let z = latent_graph(tape, post, noise)?;
    let recon = recon_graph(tape, b, z, &inp.users.targets)?;
    let neg_recon = tape.scale(recon, -1.0)?;
    let beta_eff = inp.loss.beta_at(inp.step);

    let mut total = neg_recon;
    let kl = if inp.model.variational {
        let kl = kl_graph(tape, post)?;
        let weighted = tape.scale(kl, beta_eff)?;
        total = tape.add(total, weighted)?;
        Some(kl)
    } else {
        None
    };

    let acts = word_activations_graph(tape, b, inp.vocab)?;
    let align = alignment_graph(tape, b, inp.vocab, acts, inp.triples, inp.loss.gamma)?;
    let weighted = tape.scale(align, -inp.loss.lambda_align)?;
    total = tape.add(total, weighted)?;

    let sparsity = if inp.model.sparse {
        let (asl, psl) = sparsity_graph(tape, acts, inp.loss.rho)?;
        let both = tape.add(asl, psl)?;
        let weighted = tape.scale(both, inp.loss.lambda_sparse)?;
        total = tape.add(total, weighted)?;
        Some((asl, psl))
    } else {
        None
    };

    Ok(ObjectiveVars {
        recon,
        kl,
        align,
        sparsity,
        total,
        beta_eff,
    })
}

fn breakdown(tape: &Tape, vars: &ObjectiveVars) -> LossBreakdown {
    let v = |x: Var| tape.value(x).item();
    let (asl, psl) = vars.sparsity.map(|(a, p)| (v(a), v(p))).unwrap_or((0.0, 0.0));
    LossBreakdown {
        recon: v(vars.recon),
        kl: vars.kl.map(v).unwrap_or(0.0),
        align: v(vars.align),
        asl,
        psl,
        total: v(vars.total),
        beta_eff: vars.beta_eff,
    }
}

/// Forward evaluation of every term.
pub fn total_objective(params: &ParamSet, inp: &ObjectiveInputs<'_>) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, params);
    let vars = objective_graph(&mut tape, &b, inp)?;
    Ok(breakdown(&tape, &vars))
}

/// Breakdown plus the gradient of `total` for every parameter block.
pub fn total_value_and_grad(params: &ParamSet, inp: &ObjectiveInputs<'_>) -> Result<(LossBreakdown, ParamSet)> {
    let mut out = LossBreakdown::default();
    let (_, grads) = value_and_grad(
        |tape, b| {
            let vars = objective_graph(tape, b, inp)?;
            out = breakdown(tape, &vars);
            Ok(vars.total)
        },
        params,
    )?;
    Ok((out, grads))
}

fn eval_scalar<F>(params: &ParamSet, f: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, &Bound<'_>) -> Result<Var>,
{
    crate::numerics::evaluate(f, params)
}

/// Reconstruction log-likelihood at given latents `z` (`[B, D]`).
pub fn recon_loglik(params: &ParamSet, users: &UserBatch, z: &Tensor) -> Result<f64> {
    eval_scalar(params, |tape, b| {
        let z = tape.constant(z.clone());
        recon_graph(tape, b, z, &users.targets)
    })
}

/// KL to the standard normal for posteriors given as `[B, D]` matrices;
/// identically 0 when the model is not variational.
pub fn kl_user(mean: &Tensor, log_sigma: &Tensor, variational: bool) -> Result<f64> {
    if !variational {
        return Ok(0.0);
    }
    let mut tape = Tape::new();
    let mean = tape.constant(mean.clone());
    let log_sigma = tape.constant(log_sigma.clone());
    let kl = kl_graph(&mut tape, PosteriorVars { mean, log_sigma })?;
    Ok(tape.value(kl).item())
}

pub fn alignment_loglik(params: &ParamSet, vocab: &Vocabulary, triples: &TripleBatch, gamma: f64) -> Result<f64> {
    eval_scalar(params, |tape, b| {
        let acts = word_activations_graph(tape, b, vocab)?;
        alignment_graph(tape, b, vocab, acts, triples, gamma)
    })
}

/// `(asl, psl)` for the current word encoder; `(0, 0)` when `sparse` is off.
pub fn sparsity_loss(params: &ParamSet, vocab: &Vocabulary, rho: f64, sparse: bool) -> Result<(f64, f64)> {
    if !sparse {
        return Ok((0.0, 0.0));
    }
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, params);
    let acts = word_activations_graph(&mut tape, &b, vocab)?;
    let (asl, psl) = sparsity_graph(&mut tape, acts, rho)?;
    Ok((tape.value(asl).item(), tape.value(psl).item()))
}

/// `(asl, psl)` for an explicit `[W, D]` activation matrix.
pub fn sparsity_from_activations(acts: &Tensor, rho: f64) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let a = tape.constant(acts.clone());
    let (asl, psl) = sparsity_graph(&mut tape, a, rho)?;
    Ok((tape.value(asl).item(), tape.value(psl).item()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::DiffVector;
    use crate::model::{init_params, Dims};
    use crate::numerics::{grad_check, GradCheckOptions};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dims() -> Dims {
        Dims {
            num_items: 6,
            hidden_dim: 4,
            latent_dim: 3,
            word_dim: 2,
        }
    }

    fn lexicon() -> Lexicon {
        Lexicon {
            words: vec!["a".into(), "b".into(), "c".into()],
            vectors: Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.8]).unwrap(),
            attr_words: vec![vec![0], vec![1, 2]],
        }
    }

    fn triple(r: usize, t: usize, attr: usize, y: i8) -> ModificationTriple {
        ModificationTriple {
            reference: r,
            target: t,
            diff: DiffVector::from_entries(vec![(attr, y)]).unwrap(),
        }
    }

    #[test]
    fn recon_uniform_softmax() {
        let d = Dims { num_items: 4, ..dims() };
        let p = init_params(d, &ModelConfig::default());
        let users = UserBatch::from_item_lists(&[&[0, 2]], 4).unwrap();
        let v = recon_loglik(&p, &users, &Tensor::zeros(&[1, 3])).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (0.25f64).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(v, -2.772589, epsilon = 1e-6);
    }

    #[test]
    fn recon_single_item_is_zero() {
        let d = Dims { num_items: 1, ..dims() };
        let p = init_params(d, &ModelConfig::default());
        let users = UserBatch::from_item_lists(&[&[0]], 1).unwrap();
        let z = Tensor::matrix(1, 3, vec![0.4, -2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(recon_loglik(&p, &users, &z).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn recon_shift_invariant() {
        // A constant extra latent coordinate paired with a constant item column
        // adds the same value to every logit.
        let p = init_params(dims(), &ModelConfig { init_seed: 4, ..Default::default() });
        let users = UserBatch::from_item_lists(&[&[1, 3], &[5]], 6).unwrap();
        let z = Tensor::matrix(2, 3, vec![0.3, 0.1, 0.0, -0.5, 1.0, 0.0]).unwrap();
        let mut shifted = p.clone();
        let mut items = p.get(blocks::ITEMS).unwrap().clone();
        for i in 0..6 {
            items.set(i, 2, 1.0);
        }
        shifted.replace(blocks::ITEMS, items).unwrap();
        let z2 = Tensor::matrix(2, 3, vec![0.3, 0.1, 7.0, -0.5, 1.0, -3.0]).unwrap();
        let mut orig = p.clone();
        let mut items0 = p.get(blocks::ITEMS).unwrap().clone();
        for i in 0..6 {
            items0.set(i, 2, 0.0);
        }
        orig.replace(blocks::ITEMS, items0).unwrap();
        let base0 = recon_loglik(&orig, &users, &z).unwrap();
        assert_abs_diff_eq!(recon_loglik(&shifted, &users, &z2).unwrap(), base0, epsilon = 1e-12);
        assert!(base0 <= 0.0);
    }

    #[test]
    fn kl_closed_forms() {
        let z = Tensor::zeros(&[1, 1]);
        assert_abs_diff_eq!(kl_user(&z, &z, true).unwrap(), 0.0, epsilon = 1e-12);
        let one = Tensor::full(&[1, 1], 1.0);
        assert_abs_diff_eq!(kl_user(&one, &z, true).unwrap(), 0.5, epsilon = 1e-9);
        let v = kl_user(&z, &one, true).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (1f64.exp().powi(2) - 3.0), epsilon = 1e-9);
        assert_abs_diff_eq!(v, 2.194528, epsilon = 1e-6);
        assert_eq!(kl_user(&one, &one, false).unwrap(), 0.0);
    }

    #[test]
    fn kl_batch_mean() {
        let mu = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        let ls = Tensor::zeros(&[2, 1]);
        assert_abs_diff_eq!(kl_user(&mu, &ls, true).unwrap(), 0.25, epsilon = 1e-12);
    }

    fn alignment_params(rows: &[f64]) -> (ParamSet, Vocabulary) {
        let m = rows.len();
        let d = Dims { num_items: m, hidden_dim: 2, latent_dim: 2, word_dim: 2 };
        let mut p = init_params(d, &ModelConfig::default());
        let items: Vec<f64> = rows.iter().flat_map(|&r| [r, 0.0]).collect();
        p.replace(blocks::ITEMS, Tensor::matrix(m, 2, items).unwrap()).unwrap();
        (p, Vocabulary::new(&lexicon()).unwrap())
    }

    #[test]
    fn alignment_examples() {
        // γ = 0 makes the query the reference row, so scores are h_j · h_0.
        let (p, v) = alignment_params(&[1.0, 2.0, 3.0]);
        let tr = triple(0, 2, 0, -1);
        let batch = TripleBatch::new(&[&tr], 2).unwrap();
        let a = alignment_loglik(&p, &v, &batch, 0.0).unwrap();
        let e = 1f64.exp();
        assert_abs_diff_eq!(a, (e.powi(3) / (e + e * e + e.powi(3))).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(a, -0.407606, epsilon = 1e-6);

        let (p, v) = alignment_params(&[0.0, 0.0]);
        let tr = triple(0, 1, 0, 1);
        let batch = TripleBatch::new(&[&tr], 2).unwrap();
        assert_abs_diff_eq!(alignment_loglik(&p, &v, &batch, 1.0).unwrap(), 0.5f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn alignment_saturates_below_zero() {
        let (p, v) = alignment_params(&[1.0, 0.0, 30.0]);
        let tr = triple(0, 2, 1, -1);
        let batch = TripleBatch::new(&[&tr], 2).unwrap();
        let a = alignment_loglik(&p, &v, &batch, 0.0).unwrap();
        assert!(a <= 0.0 && a > -1e-10, "{a}");
    }

    #[test]
    fn alignment_rejects_bad_target() {
        let (p, v) = alignment_params(&[1.0, 2.0]);
        let tr = triple(0, 5, 0, 1);
        let batch = TripleBatch::new(&[&tr], 2).unwrap();
        assert!(matches!(alignment_loglik(&p, &v, &batch, 1.0), Err(Error::NotFound { .. })));
    }

    #[test]
    fn sparsity_examples() {
        let (a, p) = sparsity_from_activations(&Tensor::zeros(&[3, 4]), 0.1).unwrap();
        assert_eq!((a, p), (0.0, 0.0));
        let (a, p) = sparsity_from_activations(&Tensor::full(&[3, 4], 1.0), 0.1).unwrap();
        assert_abs_diff_eq!(a, 0.81, epsilon = 1e-9);
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-12);
        let (a, p) = sparsity_from_activations(&Tensor::full(&[3, 4], 0.5), 0.1).unwrap();
        assert_abs_diff_eq!(a, 0.16, epsilon = 1e-9);
        assert_abs_diff_eq!(p, 0.25, epsilon = 1e-9);
    }

    #[test]
    fn sparsity_hinge_is_zero_below_rho() {
        let acts = Tensor::matrix(2, 2, vec![0.05, 0.2, 0.1, 0.0]).unwrap();
        let (a, _) = sparsity_from_activations(&acts, 0.1).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn zero_encoder_sparsity() {
        let p = init_params(dims(), &ModelConfig::default()).zeros_like();
        let v = Vocabulary::new(&lexicon()).unwrap();
        let (a, ps) = sparsity_loss(&p, &v, 0.1, true).unwrap();
        assert_abs_diff_eq!(a, 0.16, epsilon = 1e-12);
        assert_abs_diff_eq!(ps, 0.25, epsilon = 1e-12);
        assert_eq!(sparsity_loss(&p, &v, 0.1, false).unwrap(), (0.0, 0.0));
    }

    struct Fixture {
        params: ParamSet,
        vocab: Vocabulary,
        users: UserBatch,
        noise: Tensor,
        triples: TripleBatch,
    }

    fn fixture(seed: u64) -> Fixture {
        let params = init_params(dims(), &ModelConfig { init_seed: seed, init_scale: 0.5, ..Default::default() });
        let users = UserBatch::from_item_lists(&[&[0, 1], &[2, 4, 5], &[3]], 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let noise: Vec<f64> = (0..9).map(|_| StandardNormal.sample(&mut rng)).collect();
        let trs = [triple(0, 1, 0, 1), triple(2, 3, 1, -1), triple(5, 4, 0, -1)];
        let refs: Vec<&ModificationTriple> = trs.iter().collect();
        Fixture {
            params,
            vocab: Vocabulary::new(&lexicon()).unwrap(),
            users,
            noise: Tensor::matrix(3, 3, noise).unwrap(),
            triples: TripleBatch::new(&refs, 2).unwrap(),
        }
    }

    fn opts(seed: u64) -> GradCheckOptions {
        GradCheckOptions { seed, ..Default::default() }
    }

    #[test]
    fn gradients_of_each_term() {
        for seed in 0..3 {
            let f = fixture(seed);
            let recon = grad_check(
                |t, b| {
                    let post = encoder_graph(t, b, &f.users.input)?;
                    let z = latent_graph(t, post, Some(&f.noise))?;
                    recon_graph(t, b, z, &f.users.targets)
                },
                &f.params,
                opts(seed),
            )
            .unwrap();
            assert!(recon.passed(), "recon seed {seed}: {:?}", recon.failed().collect::<Vec<_>>());
            let kl = grad_check(
                |t, b| {
                    let post = encoder_graph(t, b, &f.users.input)?;
                    kl_graph(t, post)
                },
                &f.params,
                opts(seed),
            )
            .unwrap();
            assert!(kl.passed(), "kl seed {seed}");
            let align = grad_check(
                |t, b| {
                    let acts = word_activations_graph(t, b, &f.vocab)?;
                    alignment_graph(t, b, &f.vocab, acts, &f.triples, 1.0)
                },
                &f.params,
                opts(seed),
            )
            .unwrap();
            assert!(align.passed(), "align seed {seed}");
            for pick in 0..2 {
                let sp = grad_check(
                    |t, b| {
                        let acts = word_activations_graph(t, b, &f.vocab)?;
                        // ρ small enough that the hinge is active
                        let (a, p) = sparsity_graph(t, acts, 0.05)?;
                        Ok(if pick == 0 { a } else { p })
                    },
                    &f.params,
                    opts(seed),
                )
                .unwrap();
                assert!(sp.passed(), "sparsity {pick} seed {seed}");
            }
        }
    }

    #[test]
    fn total_gradient_and_recombination() {
        let f = fixture(1);
        let loss = LossConfig { anneal_steps: 10, ..Default::default() };
        let model = ModelConfig::default();
        let inp = ObjectiveInputs {
            vocab: &f.vocab,
            users: &f.users,
            noise: Some(&f.noise),
            triples: &f.triples,
            loss: &loss,
            model: &model,
            step: 5,
        };
        let report = grad_check(
            |t, b| objective_graph(t, b, &inp).map(|v| v.total),
            &f.params,
            opts(1),
        )
        .unwrap();
        assert!(report.passed(), "{:?}", report.failed().collect::<Vec<_>>());

        let br = total_objective(&f.params, &inp).unwrap();
        assert_eq!(br.beta_eff, 0.1);
        let recombined = -br.recon + br.beta_eff * br.kl - br.align + br.asl + br.psl;
        assert_abs_diff_eq!(br.total, recombined, epsilon = 1e-12);
        let (br2, _) = total_value_and_grad(&f.params, &inp).unwrap();
        assert_eq!(br, br2);
    }

    #[test]
    fn pure_autoencoder_and_flags() {
        let f = fixture(2);
        let loss = LossConfig { beta: 0.0, lambda_align: 0.0, lambda_sparse: 0.0, ..Default::default() };
        let model = ModelConfig::default();
        let inp = ObjectiveInputs {
            vocab: &f.vocab,
            users: &f.users,
            noise: Some(&f.noise),
            triples: &f.triples,
            loss: &loss,
            model: &model,
            step: 0,
        };
        let br = total_objective(&f.params, &inp).unwrap();
        assert_abs_diff_eq!(br.total, -br.recon, epsilon = 1e-12);

        let ablated = ModelConfig { variational: false, sparse: false, ..Default::default() };
        let loss = LossConfig::default();
        let br = total_objective(&f.params, &ObjectiveInputs { model: &ablated, loss: &loss, step: 5000, ..inp }).unwrap();
        assert_eq!((br.kl, br.asl, br.psl), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_params_kl_vanishes() {
        let f = fixture(0);
        let zero = f.params.zeros_like();
        let loss = LossConfig { beta: 1.0, lambda_align: 0.0, lambda_sparse: 0.0, anneal_steps: 0, ..Default::default() };
        let model = ModelConfig::default();
        let inp = ObjectiveInputs {
            vocab: &f.vocab,
            users: &f.users,
            noise: None,
            triples: &f.triples,
            loss: &loss,
            model: &model,
            step: 0,
        };
        let br = total_objective(&zero, &inp).unwrap();
        assert_abs_diff_eq!(br.kl, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(br.total, -br.recon, epsilon = 1e-12);
    }

    #[test]
    fn beta_schedule() {
        let c = LossConfig::default();
        assert_eq!(c.beta_at(0), 0.0);
        assert_abs_diff_eq!(c.beta_at(1000), 0.1, epsilon = 1e-15);
        assert_eq!(c.beta_at(2000), 0.2);
        assert_eq!(c.beta_at(9000), 0.2);
        assert_eq!(LossConfig { anneal_steps: 0, ..c }.beta_at(0), 0.2);
    }
}
