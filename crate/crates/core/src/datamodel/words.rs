use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::attributes::AttributeCatalog;
use super::io::{read_lines, write_atomic};

/// Pre-trained word vectors in GloVe text layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    duplicates: usize,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable {
            words: Vec::new(),
            index: HashMap::new(),
            dim,
            data: Vec::new(),
            duplicates: 0,
        }
    }

    /// Inserts or overwrites `word`; overwrites are counted.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape {
                op: "word_vector",
                left: vec![self.dim],
                right: vec![vector.len()],
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("word `{word}` has a non-finite component")));
        }
        match self.index.get(word) {
            Some(&i) => {
                self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
                self.duplicates += 1;
            }
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable> {
    let mut table: Option<WordVectorTable> = None;
    for (line_no, line) in read_lines(path)? {
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default();
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                msg: format!("bad float: {e}"),
            })?;
        let t = table.get_or_insert_with(|| WordVectorTable::new(values.len()));
        if values.len() != t.dim || values.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                msg: format!("expected {} components, found {}", t.dim, values.len()),
            });
        }
        t.insert(word, &values)?;
    }
    let table = table.ok_or_else(|| Error::data(format!("{} is empty", path.display())))?;
    if table.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate words, last occurrence kept",
            path.display(),
            table.duplicates
        );
    }
    Ok(table)
}

pub fn write_word_vectors(path: &Path, table: &WordVectorTable) -> Result<()> {
    let mut out = String::new();
    for w in &table.words {
        out.push_str(w);
        for v in table.get(w).unwrap() {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Deterministic table of unit-norm Gaussian directions, one per word.
pub fn generate_random_table(vocab: &[String], dim: usize, seed: u64) -> WordVectorTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = WordVectorTable::new(dim);
    for w in vocab {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        table.insert(w, &v).expect("dimension fixed by construction");
    }
    table
}

/// Words used by the catalog's attributes and their vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub words: Vec<String>,
    /// `[words, K]` word-vector matrix.
    pub vectors: Tensor,
    /// Word indices (a multiset) of each attribute.
    pub attr_words: Vec<Vec<usize>>,
}

/// Outcome of resolving attribute tokens against a word-vector table.
#[derive(Debug, Clone)]
pub struct ResolvedAttributes {
    pub catalog: AttributeCatalog,
    pub lexicon: Lexicon,
    /// Attributes removed because none of their tokens had a vector.
    pub dropped: Vec<String>,
    pub oov_tokens: usize,
}

/// Drops out-of-vocabulary tokens and attributes left with no tokens.
pub fn resolve_attributes(catalog: &AttributeCatalog, table: &WordVectorTable) -> ResolvedAttributes {
    let mut words: Vec<String> = Vec::new();
    let mut word_index: HashMap<&str, usize> = HashMap::new();
    let mut keep = Vec::new();
    let mut attr_words = Vec::new();
    let mut dropped = Vec::new();
    let mut oov = 0;

    for t in 0..catalog.num_attributes() {
        let known: Vec<&String> = catalog
            .tokens(t)
            .iter()
            .filter(|w| {
                let hit = table.get(w).is_some();
                if !hit {
                    oov += 1;
                }
                hit
            })
            .collect();
        if known.is_empty() {
            dropped.push(catalog.name(t).to_string());
            continue;
        }
        let ids = known
            .into_iter()
            .map(|w| {
                *word_index.entry(w.as_str()).or_insert_with(|| {
                    words.push(w.clone());
                    words.len() - 1
                })
            })
            .collect();
        keep.push(t);
        attr_words.push(ids);
    }
    if oov > 0 {
        log::warn!("{oov} attribute tokens missing from the word-vector table were dropped");
    }
    if !dropped.is_empty() {
        log::warn!("{} attributes had no known tokens and were dropped", dropped.len());
    }

    let dim = table.dim();
    let mut data = Vec::with_capacity(words.len() * dim);
    for w in &words {
        data.extend_from_slice(table.get(w).unwrap());
    }
    let vectors = Tensor::from_parts(vec![words.len(), dim], data);
    ResolvedAttributes {
        catalog: catalog.retain_attributes(&keep),
        lexicon: Lexicon {
            words,
            vectors,
            attr_words,
        },
        dropped,
        oov_tokens: oov,
    }
}
