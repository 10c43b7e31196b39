use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

use super::ids::IdMap;
use super::io::{read_lines, split_fields};

/// Layout of an interactions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionFormat {
    /// `user<TAB>item`, every line an adoption.
    Binary,
    /// `user<TAB>item<TAB>rating`; rows with `rating >= threshold` are adoptions.
    Rated { threshold: f64 },
}

/// Binary user×item adoption matrix stored as sorted per-user item lists.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    users: IdMap,
    items: IdMap,
    by_user: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    /// Builds the matrix from index pairs; duplicates collapse to a single adoption.
    pub fn from_pairs(users: IdMap, items: IdMap, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); users.len()];
        for &(u, i) in pairs {
            if u >= users.len() || i >= items.len() {
                return Err(Error::data(format!("adoption ({u}, {i}) out of range")));
            }
            sets[u].insert(i);
        }
        Ok(InteractionMatrix {
            users,
            items,
            by_user: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_adoptions(&self) -> usize {
        self.by_user.iter().map(Vec::len).sum()
    }

    /// Sorted adopted item indices of user `u`.
    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.by_user[u]
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    /// Users who adopted each item.
    pub fn item_users(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_items()];
        for (u, items) in self.by_user.iter().enumerate() {
            for &i in items {
                out[i].push(u);
            }
        }
        out
    }

    pub fn item_popularity(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items()];
        for items in &self.by_user {
            for &i in items {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Drops users with fewer than `min` adoptions. The item universe is kept.
    pub fn filter_min_interactions(self, min: usize) -> Self {
        let keep: Vec<usize> = (0..self.num_users())
            .filter(|&u| self.by_user[u].len() >= min)
            .collect();
        let ids = keep.iter().map(|&u| self.users.id(u).to_string()).collect();
        let by_user = keep.iter().map(|&u| self.by_user[u].clone()).collect();
        InteractionMatrix {
            users: IdMap::from_ordered(ids),
            items: self.items,
            by_user,
        }
    }
}

pub fn load_interactions(
    path: &Path,
    format: InteractionFormat,
    min_interactions: usize,
) -> Result<InteractionMatrix> {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut all_items: Vec<String> = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields = split_fields(&line);
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: line_no,
            msg,
        };
        let keep = match (format, fields.len()) {
            (InteractionFormat::Binary, 2) | (InteractionFormat::Binary, 3) => true,
            (InteractionFormat::Rated { threshold }, 3) => {
                let rating: f64 = fields[2]
                    .parse()
                    .map_err(|_| bad(format!("bad rating `{}`", fields[2])))?;
                rating >= threshold
            }
            (_, n) => return Err(bad(format!("expected user, item[, rating]; got {n} fields"))),
        };
        // Items seen on any row join the universe, even below the threshold.
        all_items.push(fields[1].to_string());
        if keep {
            rows.push((fields[0].to_string(), fields[1].to_string()));
        }
    }

    let users = IdMap::from_unsorted(rows.iter().map(|(u, _)| u.clone()).collect());
    let items = IdMap::from_unsorted(all_items);
    let pairs: Vec<(usize, usize)> = rows
        .iter()
        .map(|(u, i)| (users.index(u).unwrap(), items.index(i).unwrap()))
        .collect();
    let matrix = InteractionMatrix::from_pairs(users, items, &pairs)?.filter_min_interactions(min_interactions);
    if matrix.num_users() == 0 || matrix.num_adoptions() == 0 {
        return Err(Error::data(format!(
            "{} contains no users with at least {min_interactions} adoptions",
            path.display()
        )));
    }
    Ok(matrix)
}

pub fn write_interactions(path: &Path, matrix: &InteractionMatrix) -> Result<()> {
    let mut out = String::new();
    for u in 0..matrix.num_users() {
        for &i in matrix.user_items(u) {
            out.push_str(matrix.users.id(u));
            out.push('\t');
            out.push_str(matrix.items.id(i));
            out.push('\n');
        }
    }
    super::io::write_atomic(path, out.as_bytes())
}
