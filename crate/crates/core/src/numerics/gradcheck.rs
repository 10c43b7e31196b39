use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{evaluate, value_and_grad, Bound, ParamSet, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Blocks larger than this are checked on a seeded random subsample of
    /// this many elements.
    pub max_elements: usize,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to round-off are compared on an absolute scale.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            max_elements: 10_000,
            denom_floor: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub blocks: Vec<BlockError>,
    pub tol: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failed().next().is_none()
    }

    pub fn failed(&self) -> impl Iterator<Item = &BlockError> {
        self.blocks.iter().filter(move |b| b.max_rel_error > self.tol)
    }

    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares analytic gradients against central differences
/// `(f(p+h) - f(p-h)) / 2h`, element by element.
pub fn grad_check<F>(loss: F, params: &ParamSet, opts: GradCheckOptions) -> Result<GradReport>
where
    F: Fn(&mut Tape, &Bound<'_>) -> Result<Var>,
{
    grad_check_with(
        |p| evaluate(&loss, p),
        |p| value_and_grad(&loss, p).map(|(_, g)| g),
        params,
        opts,
    )
}

/// [`grad_check`] over an arbitrary value function and gradient function,
/// for hand-derived gradients.
pub fn grad_check_with<V, G>(
    value: V,
    gradient: G,
    params: &ParamSet,
    opts: GradCheckOptions,
) -> Result<GradReport>
where
    V: Fn(&ParamSet) -> Result<f64>,
    G: Fn(&ParamSet) -> Result<ParamSet>,
{
    assert!(opts.step > 0.0, "grad_check step must be positive");
    let analytic = gradient(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut blocks = Vec::with_capacity(params.len());

    for b in 0..params.len() {
        let n = params.by_index(b).len();
        let indices: Vec<usize> = if n > opts.max_elements {
            let mut v = sample(&mut rng, n, opts.max_elements).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..n).collect()
        };

        let mut worst = (0.0f64, 0usize);
        for &i in &indices {
            let orig = work.by_index(b).data()[i];
            work.data_mut(b)[i] = orig + opts.step;
            let up = value(&work)?;
            work.data_mut(b)[i] = orig - opts.step;
            let down = value(&work)?;
            work.data_mut(b)[i] = orig;

            let numeric = (up - down) / (2.0 * opts.step);
            let exact = analytic.by_index(b).data()[i];
            let denom = exact.abs().max(numeric.abs()).max(opts.denom_floor);
            let err = (exact - numeric).abs() / denom;
            if err > worst.0 {
                worst = (err, i);
            }
        }
        blocks.push(BlockError {
            name: params.names().nth(b).unwrap_or_default().to_string(),
            max_rel_error: worst.0,
            worst_index: worst.1,
            checked: indices.len(),
        });
    }
    Ok(GradReport {
        blocks,
        tol: opts.tol,
    })
}
