use std::cmp::Ordering;
use std::collections::HashMap;

/// Bidirectional map between external string ids and dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    /// Builds the map with ids in natural order (digit runs compare
    /// numerically, so `i2` precedes `i10`).
    pub fn from_unsorted(mut ids: Vec<String>) -> Self {
        ids.sort_by(|a, b| natural_cmp(a, b));
        ids.dedup();
        IdMap::from_ordered(ids)
    }

    /// Builds the map keeping the given order. Duplicates keep their first index.
    pub fn from_ordered(ids: Vec<String>) -> Self {
        let mut lookup = HashMap::with_capacity(ids.len());
        let mut kept = Vec::with_capacity(ids.len());
        for id in ids {
            if !lookup.contains_key(&id) {
                lookup.insert(id.clone(), kept.len());
                kept.push(id);
            }
        }
        IdMap { ids: kept, lookup }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (na, nb) = (trim_zeros(&a[..da]), trim_zeros(&b[..db]));
                let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb)).then(da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(s: &[u8]) -> &[u8] {
    let n = s.iter().take_while(|&&c| c == b'0').count();
    &s[n..]
}
