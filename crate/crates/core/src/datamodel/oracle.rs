use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::attributes::AttributeCatalog;
use super::ids::IdMap;
use super::io::{read_lines, split_fields, write_atomic};

/// Graded item×attribute relevance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    num_attributes: usize,
    values: Vec<f64>,
}

impl OracleTable {
    /// `values` is row-major `[items, attributes]`.
    pub fn new(num_items: usize, num_attributes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_items * num_attributes {
            return Err(Error::Shape {
                op: "oracle",
                left: vec![num_items, num_attributes],
                right: vec![values.len()],
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::data(format!("relevance {v} outside [0, 1]")));
        }
        Ok(OracleTable {
            num_attributes,
            values,
        })
    }

    pub fn num_items(&self) -> usize {
        if self.num_attributes == 0 {
            0
        } else {
            self.values.len() / self.num_attributes
        }
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn get(&self, item: usize, attribute: usize) -> Option<f64> {
        if attribute >= self.num_attributes {
            return None;
        }
        self.values.get(item * self.num_attributes + attribute).copied()
    }

    /// Column subset matching `to`, looked up by attribute name in `from`.
    pub fn restrict(&self, from: &AttributeCatalog, to: &AttributeCatalog) -> OracleTable {
        let cols: Vec<usize> = (0..to.num_attributes())
            .map(|t| from.attributes().index(to.name(t)).expect("restricted catalog is a subset"))
            .collect();
        let m = self.num_items();
        let mut values = Vec::with_capacity(m * cols.len());
        for i in 0..m {
            for &c in &cols {
                values.push(self.values[i * self.num_attributes + c]);
            }
        }
        OracleTable {
            num_attributes: cols.len(),
            values,
        }
    }
}

/// Loads `item<TAB>attribute<TAB>relevance`; every (item, attribute) pair must be present.
pub fn load_oracle(path: &Path, items: &IdMap, catalog: &AttributeCatalog) -> Result<OracleTable> {
    load_oracle_skipping(path, items, catalog, &[])
}

/// As [`load_oracle`], but rows for the attributes in `skip` are ignored.
/// Used against a checkpoint catalog that no longer has the dropped attributes.
pub fn load_oracle_skipping(
    path: &Path,
    items: &IdMap,
    catalog: &AttributeCatalog,
    skip: &[String],
) -> Result<OracleTable> {
    let t = catalog.num_attributes();
    let mut values = vec![f64::NAN; items.len() * t];
    for (line_no, line) in read_lines(path)? {
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = if line.contains('\t') {
            split_fields(&line)
        } else {
            // attribute strings may contain spaces; relevance is last, item first
            let (item, rest) = line.split_once(' ').ok_or_else(|| bad("expected 3 fields".into()))?;
            let (attr, rel) = rest.rsplit_once(' ').ok_or_else(|| bad("expected 3 fields".into()))?;
            vec![item, attr, rel]
        };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        if skip.iter().any(|s| s == fields[1]) {
            continue;
        }
        let i = items
            .index(fields[0])
            .ok_or_else(|| bad(format!("unknown item `{}`", fields[0])))?;
        let a = catalog
            .attributes()
            .index(fields[1])
            .ok_or_else(|| bad(format!("unknown attribute `{}`", fields[1])))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("bad relevance `{}`", fields[2])))?;
        values[i * t + a] = v;
    }
    let missing = values.iter().filter(|v| v.is_nan()).count();
    if missing > 0 {
        return Err(Error::data(format!(
            "{} is missing {missing} item/attribute relevance values",
            path.display()
        )));
    }
    OracleTable::new(items.len(), t, values)
}

/// Writes every pair with 6 decimal places.
pub fn write_oracle(path: &Path, items: &IdMap, catalog: &AttributeCatalog, oracle: &OracleTable) -> Result<()> {
    let mut out = String::new();
    for i in 0..oracle.num_items() {
        for t in 0..oracle.num_attributes() {
            writeln!(out, "{}\t{}\t{:.6}", items.id(i), catalog.name(t), oracle.get(i, t).unwrap()).unwrap();
        }
    }
    write_atomic(path, out.as_bytes())
}
