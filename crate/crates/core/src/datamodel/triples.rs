use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::attributes::AttributeCatalog;
use super::ids::IdMap;
use super::io::write_atomic;

/// Sparse `y = a_i - a_i'` with entries in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct DiffVector {
    entries: Vec<(usize, i8)>,
}

impl DiffVector {
    /// Entries must be in {-1, 0, 1}; zeros are discarded.
    pub fn from_entries(mut entries: Vec<(usize, i8)>) -> Result<Self> {
        if entries.iter().any(|&(_, v)| !(-1..=1).contains(&v)) {
            return Err(Error::data("difference entries must be in {-1, 0, 1}"));
        }
        entries.retain(|&(_, v)| v != 0);
        entries.sort_unstable();
        entries.dedup_by_key(|e| e.0);
        Ok(DiffVector { entries })
    }

    pub fn entries(&self) -> &[(usize, i8)] {
        &self.entries
    }

    pub fn get(&self, t: usize) -> i8 {
        self.entries
            .binary_search_by_key(&t, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    /// `Σ_t |y^t|`.
    pub fn l1(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `y^t = a_{i,t} - a_{i',t}` over two sorted attribute-index sets.
pub fn build_diff_vector(a_i: &[usize], a_j: &[usize]) -> DiffVector {
    let (mut p, mut q) = (0, 0);
    let mut entries = Vec::new();
    while p < a_i.len() || q < a_j.len() {
        match (a_i.get(p), a_j.get(q)) {
            (Some(&x), Some(&y)) if x == y => {
                p += 1;
                q += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                entries.push((x, 1));
                p += 1;
            }
            (Some(&x), None) => {
                entries.push((x, 1));
                p += 1;
            }
            (_, Some(&y)) => {
                entries.push((y, -1));
                q += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    DiffVector { entries }
}

/// `(reference, y, target)` with exactly one differing attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModificationTriple {
    pub reference: usize,
    pub target: usize,
    pub diff: DiffVector,
}

impl ModificationTriple {
    /// The single attribute the pair differs in.
    pub fn attribute(&self) -> usize {
        self.diff.entries()[0].0
    }

    /// `-y^t`: +1 when the target gains the attribute ("more"), -1 when it loses it.
    pub fn gain(&self) -> i8 {
        -self.diff.entries()[0].1
    }
}

/// All ordered item pairs whose attribute sets differ in exactly one attribute.
///
/// Items are bucketed by attribute set; each item toggles every attribute once
/// and looks up the resulting set, so the cost is `O(M·T)` lookups rather than
/// an `O(M²)` scan.
pub fn build_triples(catalog: &AttributeCatalog) -> Vec<ModificationTriple> {
    let mut buckets: HashMap<&[usize], Vec<usize>> = HashMap::new();
    for i in 0..catalog.num_items() {
        buckets.entry(catalog.item_attributes(i)).or_default().push(i);
    }
    let mut out = Vec::new();
    let mut toggled = Vec::new();
    for i in 0..catalog.num_items() {
        let attrs = catalog.item_attributes(i);
        for t in 0..catalog.num_attributes() {
            toggled.clear();
            let has = match attrs.binary_search(&t) {
                Ok(pos) => {
                    toggled.extend_from_slice(&attrs[..pos]);
                    toggled.extend_from_slice(&attrs[pos + 1..]);
                    true
                }
                Err(pos) => {
                    toggled.extend_from_slice(&attrs[..pos]);
                    toggled.push(t);
                    toggled.extend_from_slice(&attrs[pos..]);
                    false
                }
            };
            if let Some(targets) = buckets.get(toggled.as_slice()) {
                let y = if has { 1 } else { -1 };
                for &j in targets {
                    out.push(ModificationTriple {
                        reference: i,
                        target: j,
                        diff: DiffVector {
                            entries: vec![(t, y)],
                        },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleSplit {
    pub train: Vec<ModificationTriple>,
    pub test: Vec<ModificationTriple>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `round(n·test_fraction)` triples become the test set.
pub fn split_triples(
    triples: &[ModificationTriple],
    test_fraction: f64,
    seed: u64,
) -> Result<TripleSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if triples.len() < 2 {
        return Err(Error::data(format!(
            "need at least 2 triples to split, found {}",
            triples.len()
        )));
    }
    let mut shuffled = triples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((triples.len() as f64 * test_fraction).round() as usize).clamp(1, triples.len() - 1);
    let train = shuffled.split_off(n_test);
    Ok(TripleSplit {
        train,
        test: shuffled,
        seed,
    })
}

/// Number of attributes `t` with `Σ |y^t| > 1` over the triples.
pub fn available_attribute_count(triples: &[ModificationTriple]) -> usize {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for tr in triples {
        for &(t, _) in tr.diff.entries() {
            *counts.entry(t).or_default() += 1;
        }
    }
    counts.values().filter(|&&c| c > 1).count()
}

pub fn write_triples(
    path: &Path,
    triples: &[ModificationTriple],
    items: &IdMap,
    catalog: &AttributeCatalog,
) -> Result<()> {
    let mut out = String::from(
        "# ref_item\tsign\tattribute\ttarget_item\n# sign = -y: +1 means the target gains the attribute, -1 means it loses it\n",
    );
    for tr in triples {
        let sign = if tr.gain() > 0 { "+1" } else { "-1" };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            items.id(tr.reference),
            sign,
            catalog.name(tr.attribute()),
            items.id(tr.target)
        ));
    }
    write_atomic(path, out.as_bytes())
}
