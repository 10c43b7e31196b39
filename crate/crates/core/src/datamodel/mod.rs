//! Interaction data, attribute catalogs, word vectors and modification triples.

mod attributes;
mod ids;
mod interactions;
pub mod io;
mod oracle;
mod triples;
mod words;

use std::path::Path;

pub use attributes::{load_attributes, tokenize, write_attributes, AttributeCatalog};
pub use ids::{natural_cmp, IdMap};
pub use interactions::{load_interactions, write_interactions, InteractionFormat, InteractionMatrix};
pub use oracle::{load_oracle, load_oracle_skipping, write_oracle, OracleTable};
pub use triples::{
    available_attribute_count, build_diff_vector, build_triples, split_triples, write_triples,
    DiffVector, ModificationTriple, TripleSplit,
};
pub use words::{
    generate_random_table, load_word_vectors, resolve_attributes, write_word_vectors, Lexicon,
    ResolvedAttributes, WordVectorTable,
};

use crate::error::Result;

pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const ATTRIBUTES_FILE: &str = "attributes.tsv";
pub const WORD_VECTORS_FILE: &str = "word_vectors.txt";
pub const ORACLE_FILE: &str = "oracle.tsv";

/// Everything training and evaluation need, loaded from one data directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub interactions: InteractionMatrix,
    pub catalog: AttributeCatalog,
    pub lexicon: Lexicon,
    /// Attributes removed because none of their tokens had a word vector.
    pub dropped_attributes: Vec<String>,
    pub oracle: Option<OracleTable>,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: InteractionFormat,
    pub min_interactions: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: InteractionFormat::Binary,
            min_interactions: 5,
        }
    }
}

impl Dataset {
    pub fn from_parts(
        interactions: InteractionMatrix,
        catalog: &AttributeCatalog,
        table: &WordVectorTable,
        oracle: Option<OracleTable>,
    ) -> Self {
        let resolved = resolve_attributes(catalog, table);
        let oracle = oracle.map(|o| o.restrict(catalog, &resolved.catalog));
        Dataset {
            interactions,
            catalog: resolved.catalog,
            lexicon: resolved.lexicon,
            dropped_attributes: resolved.dropped,
            oracle,
        }
    }

    /// Loads `interactions.tsv`, `attributes.tsv`, `word_vectors.txt` and,
    /// when present, `oracle.tsv` from `dir`.
    pub fn load_dir(dir: &Path, opts: LoadOptions) -> Result<Self> {
        let interactions = load_interactions(&dir.join(INTERACTIONS_FILE), opts.format, opts.min_interactions)?;
        let catalog = load_attributes(&dir.join(ATTRIBUTES_FILE), interactions.items())?;
        let table = load_word_vectors(&dir.join(WORD_VECTORS_FILE))?;
        let oracle_path = dir.join(ORACLE_FILE);
        let oracle = if oracle_path.exists() {
            Some(load_oracle(&oracle_path, interactions.items(), &catalog)?)
        } else {
            None
        };
        Ok(Dataset::from_parts(interactions, &catalog, &table, oracle))
    }

    pub fn num_items(&self) -> usize {
        self.interactions.num_items()
    }

    pub fn triples(&self) -> Vec<ModificationTriple> {
        build_triples(&self.catalog)
    }
}
