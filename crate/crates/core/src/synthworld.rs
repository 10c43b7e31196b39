//! Synthetic worlds with graded ground-truth item/attribute relevance.
//!
//! Relevance `g_{i,t}` is drawn uniformly on `[0, 1]` and thresholded at `τ`
//! to give the binary attribute labels the model trains on. Users carry a
//! preference vector on the simplex and adopt the items that score highest
//! under `p_u · g_i` plus a little noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    self, generate_random_table, io::ensure_dir, AttributeCatalog, Dataset, IdMap, InteractionMatrix, OracleTable,
    WordVectorTable,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_attributes: usize,
    /// Symmetric Dirichlet concentration of user preferences.
    pub concentration: f64,
    pub adoptions_per_user: usize,
    /// Label threshold: `a_{i,t} = 1 ⇔ g_{i,t} > τ`.
    pub tau: f64,
    /// Standard deviation of the adoption-score noise.
    pub noise: f64,
    pub word_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 500,
            num_items: 300,
            num_attributes: 8,
            concentration: 0.5,
            adoptions_per_user: 20,
            tau: 0.5,
            noise: 0.05,
            word_dim: 16,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.num_attributes == 0 || self.word_dim == 0 {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1), got {}", self.tau)));
        }
        if !(self.concentration > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("concentration must be positive and noise non-negative".into()));
        }
        if self.adoptions_per_user == 0 || self.adoptions_per_user > self.num_items {
            return Err(Error::Config(format!(
                "adoptions per user must be in 1..={} so every user has candidate items",
                self.num_items
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub interactions: InteractionMatrix,
    pub catalog: AttributeCatalog,
    pub oracle: OracleTable,
    pub preferences: Vec<Vec<f64>>,
    pub word_vectors: WordVectorTable,
}

pub fn generate_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let (m, t, n) = (config.num_items, config.num_attributes, config.num_users);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let g: Vec<f64> = (0..m * t).map(|_| rng.random::<f64>()).collect();
    let item_attrs: Vec<Vec<usize>> = (0..m)
        .map(|i| (0..t).filter(|&a| g[i * t + a] > config.tau).collect())
        .collect();

    let gamma = Gamma::new(config.concentration, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let preferences: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut p: Vec<f64> = (0..t).map(|_| gamma.sample(&mut rng)).collect();
            let s: f64 = p.iter().sum();
            if s > 0.0 {
                p.iter_mut().for_each(|v| *v /= s);
            } else {
                p.iter_mut().for_each(|v| *v = 1.0 / t as f64);
            }
            p
        })
        .collect();

    let mut pairs = Vec::with_capacity(n * config.adoptions_per_user);
    let mut best_user = vec![(f64::NEG_INFINITY, 0usize); m];
    let mut adopted = vec![false; m];
    for (u, p) in preferences.iter().enumerate() {
        let mut scored: Vec<(f64, usize)> = (0..m)
            .map(|i| {
                let affinity: f64 = p.iter().zip(&g[i * t..(i + 1) * t]).map(|(a, b)| a * b).sum();
                let noise: f64 = StandardNormal.sample(&mut rng);
                (affinity + config.noise * noise, i)
            })
            .collect();
        for &(s, i) in &scored {
            if s > best_user[i].0 {
                best_user[i] = (s, u);
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in scored.iter().take(config.adoptions_per_user) {
            pairs.push((u, i));
            adopted[i] = true;
        }
    }
    // Every item gets at least one adopter so the item universe survives a
    // write/read cycle through interactions.tsv.
    for i in 0..m {
        if !adopted[i] {
            pairs.push((best_user[i].1, i));
        }
    }

    let users = IdMap::from_ordered((0..n).map(|u| format!("u{u}")).collect());
    let items = IdMap::from_ordered((0..m).map(|i| format!("i{i}")).collect());
    let attrs = IdMap::from_ordered((0..t).map(|a| format!("attr_{a}")).collect());
    let word_vectors = generate_random_table(attrs.ids(), config.word_dim, config.seed ^ 0x9e37_79b9_7f4a_7c15);

    Ok(SynthWorld {
        config: config.clone(),
        interactions: InteractionMatrix::from_pairs(users, items, &pairs)?,
        catalog: AttributeCatalog::new(attrs, item_attrs)?,
        oracle: OracleTable::new(m, t, g)?,
        preferences,
        word_vectors,
    })
}

impl SynthWorld {
    pub fn oracle_relevance(&self, item: usize, attribute: usize) -> Result<f64> {
        self.oracle.get(item, attribute).ok_or_else(|| Error::NotFound {
            kind: "item/attribute",
            id: format!("({item}, {attribute})"),
        })
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset::from_parts(
            self.interactions.clone(),
            &self.catalog,
            &self.word_vectors,
            Some(self.oracle.clone()),
        )
    }

    /// Writes interactions.tsv, attributes.tsv, word_vectors.txt and oracle.tsv.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        let items = self.interactions.items();
        datamodel::write_interactions(&dir.join(datamodel::INTERACTIONS_FILE), &self.interactions)?;
        datamodel::write_attributes(&dir.join(datamodel::ATTRIBUTES_FILE), items, &self.catalog)?;
        datamodel::write_word_vectors(&dir.join(datamodel::WORD_VECTORS_FILE), &self.word_vectors)?;
        datamodel::write_oracle(&dir.join(datamodel::ORACLE_FILE), items, &self.catalog, &self.oracle)
    }
}
