//! Parameter layout and forward computations.
//!
//! Block layout (row-vector convention, so every weight is `[in, out]`):
//!
//! | block   | shape    | role                                   |
//! |---------|----------|----------------------------------------|
//! | `w1`    | `[M, H]` | user encoder hidden layer              |
//! | `b1`    | `[1, H]` |                                        |
//! | `w_mu`  | `[H, D]` | posterior mean head                    |
//! | `b_mu`  | `[1, D]` |                                        |
//! | `w_s`   | `[H, D]` | posterior log-sigma head               |
//! | `b_s`   | `[1, D]` |                                        |
//! | `items` | `[M, D]` | item representation table `H`          |
//! | `w_a`   | `[K, D]` | word encoder `f(w) = σ(v_w W_a + b_a)` |
//! | `b_a`   | `[1, D]` |                                        |
//!
//! Modifications use the gain direction: a target that gains attribute `t`
//! is reached from `h_i + γ·F(t)`, so the signed weight of `F(t)` is `-y^t`
//! and "more" is `+1`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::Lexicon;
use crate::error::{Error, Result};
use crate::numerics::{dot, ParamSet, Tensor};

pub const LOG_SIGMA_CLAMP: f64 = 10.0;

pub mod blocks {
    pub const W1: &str = "w1";
    pub const B1: &str = "b1";
    pub const W_MU: &str = "w_mu";
    pub const B_MU: &str = "b_mu";
    pub const W_S: &str = "w_s";
    pub const B_S: &str = "b_s";
    pub const ITEMS: &str = "items";
    pub const W_A: &str = "w_a";
    pub const B_A: &str = "b_a";

    pub const ORDER: [&str; 9] = [W1, B1, W_MU, B_MU, W_S, B_S, ITEMS, W_A, B_A];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Gaussian posterior with reparameterized sampling; off gives `z = μ`.
    pub variational: bool,
    /// Average and partial sparsity losses on the word encoder.
    pub sparse: bool,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 16,
            hidden_dim: 64,
            variational: true,
            sparse: true,
            init_seed: 0,
            init_scale: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::Config("latent_dim must be at least 2".into()));
        }
        if self.hidden_dim < 1 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Shapes that fix a parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub num_items: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub word_dim: usize,
}

impl Dims {
    pub fn shape(&self, block: &str) -> Vec<usize> {
        let Dims {
            num_items: m,
            hidden_dim: h,
            latent_dim: d,
            word_dim: k,
        } = *self;
        match block {
            blocks::W1 => vec![m, h],
            blocks::B1 => vec![1, h],
            blocks::W_MU | blocks::W_S => vec![h, d],
            blocks::B_MU | blocks::B_S | blocks::B_A => vec![1, d],
            blocks::ITEMS => vec![m, d],
            blocks::W_A => vec![k, d],
            other => panic!("unknown block {other}"),
        }
    }
}

/// Weights `N(0, init_scale²)`, biases zero, item rows `N(0, 1/√D)` (variance) per component.
pub fn init_params(dims: Dims, config: &ModelConfig) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let weight = Normal::new(0.0, config.init_scale).expect("validated scale");
    let item = Normal::new(0.0, (dims.latent_dim as f64).powf(-0.25)).expect("positive");
    let mut params = ParamSet::new();
    for name in blocks::ORDER {
        let shape = dims.shape(name);
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match name {
            blocks::B1 | blocks::B_MU | blocks::B_S | blocks::B_A => vec![0.0; n],
            blocks::ITEMS => (0..n).map(|_| item.sample(&mut rng)).collect(),
            _ => (0..n).map(|_| weight.sample(&mut rng)).collect(),
        };
        params
            .insert(name, Tensor::new(shape, data).expect("shape from dims"))
            .expect("unique block names");
    }
    params
}

/// Checks that `params` carries every block with the layout implied by `dims`.
pub fn check_layout(params: &ParamSet, dims: Dims) -> Result<()> {
    for name in blocks::ORDER {
        let t = params
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter block `{name}`")))?;
        let want = dims.shape(name);
        if t.shape() != want.as_slice() {
            return Err(Error::Shape {
                op: "layout",
                left: want,
                right: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}

pub fn dims_of(params: &ParamSet) -> Result<Dims> {
    let get = |n: &str| {
        params
            .get(n)
            .map(|t| t.dims2())
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter block `{n}`")))
    };
    let (m, h) = get(blocks::W1)?;
    let (k, d) = get(blocks::W_A)?;
    let dims = Dims {
        num_items: m,
        hidden_dim: h,
        latent_dim: d,
        word_dim: k,
    };
    check_layout(params, dims)?;
    Ok(dims)
}

/// Diagonal Gaussian `q(z_u | x_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPosterior {
    pub mean: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Train,
    Eval,
}

/// L2-normalized binary indicator of the adopted items.
pub fn normalized_input(items: &[usize], num_items: usize) -> Vec<f64> {
    let mut x = vec![0.0; num_items];
    let scale = 1.0 / (items.len() as f64).sqrt();
    for &i in items {
        x[i] = scale;
    }
    x
}

fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let out_dim = w.cols();
    let mut out = b.data().to_vec();
    for (p, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(w.row_slice(p)) {
            *o += xv * wv;
        }
    }
    debug_assert_eq!(out.len(), out_dim);
    out
}

fn block<'a>(params: &'a ParamSet, name: &str) -> &'a Tensor {
    params
        .get(name)
        .unwrap_or_else(|| panic!("parameter block `{name}` missing"))
}

pub fn encode_user(params: &ParamSet, items: &[usize]) -> Result<UserPosterior> {
    if items.is_empty() {
        return Err(Error::data("cannot encode a user with no adoptions"));
    }
    let w1 = block(params, blocks::W1);
    let m = w1.rows();
    if let Some(&bad) = items.iter().find(|&&i| i >= m) {
        return Err(Error::NotFound {
            kind: "item index",
            id: bad.to_string(),
        });
    }
    let x = normalized_input(items, m);
    let hidden: Vec<f64> = affine(&x, w1, block(params, blocks::B1))
        .into_iter()
        .map(f64::tanh)
        .collect();
    let mean = affine(&hidden, block(params, blocks::W_MU), block(params, blocks::B_MU));
    let log_sigma = affine(&hidden, block(params, blocks::W_S), block(params, blocks::B_S))
        .into_iter()
        .map(|v| v.clamp(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP))
        .collect();
    Ok(UserPosterior { mean, log_sigma })
}

/// Reparameterized draw `μ + σ ⊙ ε`; the mean in eval mode or when the
/// model is not variational.
pub fn sample_latent<R: Rng + ?Sized>(
    posterior: &UserPosterior,
    mode: SampleMode,
    variational: bool,
    rng: &mut R,
) -> Vec<f64> {
    if mode == SampleMode::Eval || !variational {
        return posterior.mean.clone();
    }
    posterior
        .mean
        .iter()
        .zip(&posterior.log_sigma)
        .map(|(&mu, &ls)| {
            let eps: f64 = StandardNormal.sample(rng);
            mu + ls.exp() * eps
        })
        .collect()
}

/// `H · z`.
pub fn item_logits(params: &ParamSet, z: &[f64]) -> Vec<f64> {
    let h = block(params, blocks::ITEMS);
    (0..h.rows()).map(|i| dot(h.row_slice(i), z)).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `f(w) = σ(v_w W_a + b_a)`, every component in (0, 1).
pub fn encode_word(params: &ParamSet, vector: &[f64]) -> Result<Vec<f64>> {
    let w_a = block(params, blocks::W_A);
    if vector.len() != w_a.rows() {
        return Err(Error::Shape {
            op: "encode_word",
            left: vec![w_a.rows()],
            right: vec![vector.len()],
        });
    }
    Ok(affine(vector, w_a, block(params, blocks::B_A))
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// Activations of every lexicon word, `[words, D]`.
pub fn word_activations(params: &ParamSet, lexicon: &Lexicon) -> Result<Tensor> {
    let d = block(params, blocks::B_A).len();
    let mut data = Vec::with_capacity(lexicon.words.len() * d);
    for w in 0..lexicon.words.len() {
        data.extend(encode_word(params, lexicon.vectors.row_slice(w))?);
    }
    Tensor::matrix(lexicon.words.len(), d, data)
}

/// `F(t) = Σ_{w ∈ W(t)} f(w)`.
pub fn encode_attribute(params: &ParamSet, lexicon: &Lexicon, t: usize) -> Result<Vec<f64>> {
    let words = lexicon.attr_words.get(t).ok_or_else(|| Error::NotFound {
        kind: "attribute index",
        id: t.to_string(),
    })?;
    if words.is_empty() {
        return Err(Error::data(format!("attribute {t} has no tokens")));
    }
    let d = block(params, blocks::B_A).len();
    let mut out = vec![0.0; d];
    for &w in words {
        for (o, v) in out.iter_mut().zip(encode_word(params, lexicon.vectors.row_slice(w))?) {
            *o += v;
        }
    }
    Ok(out)
}

/// All attribute representations, `[T, D]`.
pub fn attribute_vectors(params: &ParamSet, lexicon: &Lexicon) -> Result<Tensor> {
    let acts = word_activations(params, lexicon)?;
    let d = acts.cols();
    let mut data = vec![0.0; lexicon.attr_words.len() * d];
    for (t, words) in lexicon.attr_words.iter().enumerate() {
        if words.is_empty() {
            return Err(Error::data(format!("attribute {t} has no tokens")));
        }
        for &w in words {
            for (o, v) in data[t * d..(t + 1) * d].iter_mut().zip(acts.row_slice(w)) {
                *o += v;
            }
        }
    }
    Tensor::matrix(lexicon.attr_words.len(), d, data)
}

/// `Σ_t gain_t · F(t)` with gains in {-1, +1}.
pub fn modification_vector(attr_vectors: &Tensor, gains: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; attr_vectors.cols()];
    for &(t, g) in gains {
        for (o, v) in out.iter_mut().zip(attr_vectors.row_slice(t)) {
            *o += g * v;
        }
    }
    out
}

/// `h_i + γ · modification`.
pub fn build_query(reference: &[f64], modification: &[f64], gamma: f64) -> Vec<f64> {
    reference
        .iter()
        .zip(modification)
        .map(|(h, m)| h + gamma * m)
        .collect()
}

/// Item representation `h_i`.
pub fn item_vector(params: &ParamSet, i: usize) -> &[f64] {
    block(params, blocks::ITEMS).row_slice(i)
}
