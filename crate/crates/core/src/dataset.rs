//! Sparse rating datasets, response masks and the triplet file format.
//!
//! A triplet file is UTF-8 text with one `user<TAB>item<TAB>rating` line per
//! observed rating, 0-based indices and no header.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub user: u32,
    pub item: u32,
    pub rating: u32,
}

impl Triplet {
    pub fn new(user: u32, item: u32, rating: u32) -> Self {
        Self { user, item, rating }
    }
}

/// An immutable set of observed ratings on an `n_users × n_items` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_users: usize,
    n_items: usize,
    d_levels: u32,
    triplets: Vec<Triplet>,
}

impl Dataset {
    pub fn new(n_users: usize, n_items: usize, d_levels: u32, triplets: Vec<Triplet>) -> Result<Self> {
        if n_users == 0 || n_items == 0 {
            return Err(Error::invalid("dataset dimensions must be positive"));
        }
        if d_levels < 2 {
            return Err(Error::invalid(format!("d_levels must be >= 2, got {d_levels}")));
        }
        let mut seen = HashSet::with_capacity(triplets.len());
        for t in &triplets {
            if t.user as usize >= n_users || t.item as usize >= n_items {
                return Err(Error::invalid(format!(
                    "cell ({}, {}) outside {n_users}x{n_items}",
                    t.user, t.item
                )));
            }
            if t.rating < 1 || t.rating > d_levels {
                return Err(Error::invalid(format!(
                    "rating {} at ({}, {}) outside 1..={d_levels}",
                    t.rating, t.user, t.item
                )));
            }
            if !seen.insert((t.user, t.item)) {
                return Err(Error::invalid(format!("duplicate cell ({}, {})", t.user, t.item)));
            }
        }
        Ok(Self {
            n_users,
            n_items,
            d_levels,
            triplets,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn d_levels(&self) -> u32 {
        self.d_levels
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// A dataset on the same grid holding a subset of triplets.
    pub fn with_triplets(&self, triplets: Vec<Triplet>) -> Result<Self> {
        Self::new(self.n_users, self.n_items, self.d_levels, triplets)
    }

    /// The response matrix: true exactly at this dataset's cells.
    pub fn response_mask(&self) -> ResponseMask {
        let mut mask = ResponseMask::empty(self.n_users, self.n_items);
        for t in &self.triplets {
            mask.set(t.user as usize, t.item as usize, true);
        }
        mask
    }

    /// Parses a triplet file. Dimensions are taken from the caller.
    pub fn read_triplets(path: &Path, n_users: usize, n_items: usize, d_levels: u32) -> Result<Self> {
        let triplets = read_triplet_file(path)?;
        Self::new(n_users, n_items, d_levels, triplets)
    }

    /// Parses a triplet file, sizing the grid from the largest indices seen.
    pub fn read_triplets_inferred(path: &Path, d_levels: u32) -> Result<Self> {
        let triplets = read_triplet_file(path)?;
        let n = triplets.iter().map(|t| t.user as usize + 1).max().unwrap_or(0);
        let m = triplets.iter().map(|t| t.item as usize + 1).max().unwrap_or(0);
        Self::new(n, m, d_levels, triplets)
    }

    pub fn to_triplet_text(&self) -> String {
        let mut out = String::with_capacity(self.triplets.len() * 12);
        for t in &self.triplets {
            let _ = writeln!(out, "{}\t{}\t{}", t.user, t.item, t.rating);
        }
        out
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_triplet_text()).map_err(|e| Error::io(path, e))
    }
}

/// Parses triplet text; `path` is only used for error messages.
pub fn parse_triplets(text: &str, path: &Path) -> Result<Vec<Triplet>> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (lineno, line) in body.split('\n').enumerate() {
        let line_no = lineno + 1;
        if line.is_empty() {
            return Err(parse_error(path, line_no, "empty line"));
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let field = |idx: usize, name: &str| -> Result<u32> {
            fields[idx]
                .parse::<u32>()
                .map_err(|e| parse_error(path, line_no, format!("bad {name} {:?}: {e}", fields[idx])))
        };
        out.push(Triplet::new(field(0, "user")?, field(1, "item")?, field(2, "rating")?));
    }
    Ok(out)
}

fn read_triplet_file(path: &Path) -> Result<Vec<Triplet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triplets(&text, path)
}

pub(crate) fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Dense boolean matrix over the user × item grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMask {
    n_users: usize,
    n_items: usize,
    bits: Vec<bool>,
}

impl ResponseMask {
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        Self {
            n_users,
            n_items,
            bits: vec![false; n_users * n_items],
        }
    }

    pub fn from_bits(n_users: usize, n_items: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_users * n_items {
            return Err(Error::invalid(format!(
                "mask has {} cells, expected {}",
                bits.len(),
                n_users * n_items
            )));
        }
        Ok(Self { n_users, n_items, bits })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn get(&self, user: usize, item: usize) -> bool {
        self.bits[user * self.n_items + item]
    }

    #[inline]
    pub fn set(&mut self, user: usize, item: usize, value: bool) {
        self.bits[user * self.n_items + item] = value;
    }

    /// Row `user` of the mask.
    #[inline]
    pub fn row(&self, user: usize) -> &[bool] {
        &self.bits[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}
