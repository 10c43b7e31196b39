use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

use super::ids::IdMap;
use super::io::{read_lines, write_atomic};

/// Whitespace split, lowercased.
pub fn tokenize(attribute: &str) -> Vec<String> {
    attribute.split_whitespace().map(str::to_lowercase).collect()
}

/// Attribute strings and the binary item×attribute relation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCatalog {
    attributes: IdMap,
    tokens: Vec<Vec<String>>,
    /// Sorted attribute indices carried by each item.
    item_attrs: Vec<Vec<usize>>,
}

impl AttributeCatalog {
    /// `item_attrs[i]` lists the attribute indices of item `i`, in any order.
    pub fn new(attributes: IdMap, item_attrs: Vec<Vec<usize>>) -> Result<Self> {
        let t = attributes.len();
        let mut sets = Vec::with_capacity(item_attrs.len());
        for attrs in item_attrs {
            let set: BTreeSet<usize> = attrs.into_iter().collect();
            if let Some(&bad) = set.iter().find(|&&a| a >= t) {
                return Err(Error::data(format!("attribute index {bad} out of range")));
            }
            sets.push(set.into_iter().collect());
        }
        let tokens = attributes.ids().iter().map(|a| tokenize(a)).collect();
        Ok(AttributeCatalog {
            attributes,
            tokens,
            item_attrs: sets,
        })
    }

    pub fn num_items(&self) -> usize {
        self.item_attrs.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn attributes(&self) -> &IdMap {
        &self.attributes
    }

    pub fn name(&self, t: usize) -> &str {
        self.attributes.id(t)
    }

    pub fn tokens(&self, t: usize) -> &[String] {
        &self.tokens[t]
    }

    pub fn item_attributes(&self, i: usize) -> &[usize] {
        &self.item_attrs[i]
    }

    pub fn has(&self, i: usize, t: usize) -> bool {
        self.item_attrs[i].binary_search(&t).is_ok()
    }

    /// Dense 0/1 row `a_{i,:}`.
    pub fn dense_row(&self, i: usize) -> Vec<u8> {
        let mut row = vec![0u8; self.num_attributes()];
        for &t in &self.item_attrs[i] {
            row[t] = 1;
        }
        row
    }

    /// Catalog restricted to the attributes in `keep` (indices into `self`),
    /// renumbered in the order given.
    pub fn retain_attributes(&self, keep: &[usize]) -> AttributeCatalog {
        let mut remap = vec![usize::MAX; self.num_attributes()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let ids = keep.iter().map(|&t| self.name(t).to_string()).collect();
        let item_attrs = self
            .item_attrs
            .iter()
            .map(|attrs| {
                let mut v: Vec<usize> = attrs
                    .iter()
                    .map(|&t| remap[t])
                    .filter(|&t| t != usize::MAX)
                    .collect();
                v.sort_unstable();
                v
            })
            .collect();
        AttributeCatalog {
            attributes: IdMap::from_ordered(ids),
            tokens: keep.iter().map(|&t| self.tokens[t].clone()).collect(),
            item_attrs,
        }
    }
}

/// Loads `item<TAB>attribute string` rows against a known item universe.
pub fn load_attributes(path: &Path, items: &IdMap) -> Result<AttributeCatalog> {
    let mut rows = Vec::new();
    let mut unknown = BTreeSet::new();
    for (line_no, line) in read_lines(path)? {
        let (item, attr) = match line.split_once('\t') {
            Some((i, a)) => (i.trim(), a.trim()),
            None => match line.trim().split_once(char::is_whitespace) {
                Some((i, a)) => (i, a.trim()),
                None => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: line_no,
                        msg: "expected item and attribute".into(),
                    })
                }
            },
        };
        if attr.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                msg: "empty attribute".into(),
            });
        }
        match items.index(item) {
            Some(i) => rows.push((i, attr.to_string())),
            None => {
                unknown.insert(item.to_string());
            }
        }
    }
    if !unknown.is_empty() {
        let list: Vec<_> = unknown.into_iter().collect();
        return Err(Error::data(format!(
            "{} references unknown items: {}",
            path.display(),
            list.join(", ")
        )));
    }
    let attributes = IdMap::from_unsorted(rows.iter().map(|(_, a)| a.clone()).collect());
    let mut item_attrs = vec![Vec::new(); items.len()];
    for (i, a) in rows {
        item_attrs[i].push(attributes.index(&a).unwrap());
    }
    AttributeCatalog::new(attributes, item_attrs)
}

pub fn write_attributes(path: &Path, items: &IdMap, catalog: &AttributeCatalog) -> Result<()> {
    let mut out = String::new();
    for i in 0..catalog.num_items() {
        for &t in catalog.item_attributes(i) {
            out.push_str(items.id(i));
            out.push('\t');
            out.push_str(catalog.name(t));
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}
