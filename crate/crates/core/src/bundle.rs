//! On-disk layout of a generated synthetic trial.
//!
//! ```text
//! <dir>/meta.json              dims, generator config, seed, realized fractions
//! <dir>/cells.tsv              i  j  x  inspected  observed   (row-major)
//! <dir>/train.tsv              one triplet file per split
//! <dir>/test_traditional.tsv
//! <dir>/test_realistic.tsv
//! <dir>/test_adversarial.tsv
//! <dir>/validation.tsv
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{parse_error, Dataset, ResponseMask};
use crate::error::{Error, Result};
use crate::synth::{ProtocolSplit, SyntheticConfig, TruthBundle};
use crate::CODE_VERSION;

pub const META_FILE: &str = "meta.json";
pub const CELLS_FILE: &str = "cells.tsv";

/// Cell counts of a bundle; fractions are relative to `n · m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub cells: usize,
    pub inspected: usize,
    pub observed: usize,
    pub train: usize,
    pub test_traditional: usize,
    pub test_realistic: usize,
    pub test_adversarial: usize,
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub inspected: f64,
    pub observed: f64,
    pub train: f64,
    pub test_traditional: f64,
    pub test_realistic: f64,
    pub test_adversarial: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub code_version: String,
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub d_levels: u32,
    pub config: SyntheticConfig,
    pub counts: SplitSummary,
    pub fractions: Fractions,
}

impl BundleMeta {
    pub fn describe(bundle: &TruthBundle, split: &ProtocolSplit) -> Self {
        let counts = SplitSummary {
            cells: bundle.full_ratings.len(),
            inspected: bundle.inspected.count(),
            observed: bundle.observed.count(),
            train: split.train.len(),
            test_traditional: split.test_traditional.len(),
            test_realistic: split.test_realistic.len(),
            test_adversarial: split.test_adversarial.len(),
            validation: split.validation.len(),
        };
        let total = counts.cells.max(1) as f64;
        let frac = |c: usize| c as f64 / total;
        let fractions = Fractions {
            inspected: frac(counts.inspected),
            observed: frac(counts.observed),
            train: frac(counts.train),
            test_traditional: frac(counts.test_traditional),
            test_realistic: frac(counts.test_realistic),
            test_adversarial: frac(counts.test_adversarial),
            validation: frac(counts.validation),
        };
        Self {
            code_version: CODE_VERSION.to_string(),
            seed: bundle.seed,
            n_users: bundle.n(),
            n_items: bundle.m(),
            d_levels: bundle.config.d_levels,
            config: bundle.config.clone(),
            counts,
            fractions,
        }
    }
}

/// A bundle as read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub meta: BundleMeta,
    pub truth: TruthBundle,
    pub split: ProtocolSplit,
}

/// Writes the full layout into `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, bundle: &TruthBundle, split: &ProtocolSplit) -> Result<BundleMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = BundleMeta::describe(bundle, split);
    let meta_path = dir.join(META_FILE);
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;

    let cells_path = dir.join(CELLS_FILE);
    fs::write(&cells_path, cells_text(bundle)).map_err(|e| Error::io(&cells_path, e))?;

    for (name, data) in split.parts() {
        data.write_triplets(&dir.join(format!("{name}.tsv")))?;
    }
    Ok(meta)
}

fn cells_text(bundle: &TruthBundle) -> String {
    let m = bundle.m();
    let mut out = String::with_capacity(bundle.full_ratings.len() * 16);
    let (inspected, observed) = (bundle.inspected.bits(), bundle.observed.bits());
    for (cell, &x) in bundle.full_ratings.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{x}\t{}\t{}",
            cell / m,
            cell % m,
            u8::from(inspected[cell]),
            u8::from(observed[cell])
        );
    }
    out
}

pub fn read_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads only the split files; enough for training and evaluation.
pub fn read_split(dir: &Path, meta: &BundleMeta) -> Result<ProtocolSplit> {
    let load = |name: &str| {
        Dataset::read_triplets(
            &dir.join(format!("{name}.tsv")),
            meta.n_users,
            meta.n_items,
            meta.d_levels,
        )
    };
    Ok(ProtocolSplit {
        train: load("train")?,
        test_traditional: load("test_traditional")?,
        test_realistic: load("test_realistic")?,
        test_adversarial: load("test_adversarial")?,
        validation: load("validation")?,
    })
}

pub fn read_bundle(dir: &Path) -> Result<LoadedBundle> {
    let meta = read_meta(dir)?;
    let split = read_split(dir, &meta)?;
    let path = dir.join(CELLS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let truth = parse_cells(&text, &path, &meta)?;
    truth.validate()?;
    Ok(LoadedBundle { meta, truth, split })
}

fn parse_cells(text: &str, path: &Path, meta: &BundleMeta) -> Result<TruthBundle> {
    let (n, m) = (meta.n_users, meta.n_items);
    let cells = n * m;
    let mut ratings = Vec::with_capacity(cells);
    let mut inspected = Vec::with_capacity(cells);
    let mut observed = Vec::with_capacity(cells);
    let body = text.strip_suffix('\n').unwrap_or(text);
    for (idx, line) in body.split('\n').enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let num = |k: usize| {
            fields[k]
                .parse::<u64>()
                .map_err(|e| parse_error(path, line_no, format!("bad field {:?}: {e}", fields[k])))
        };
        let flag = |k: usize| match fields[k] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(parse_error(path, line_no, format!("expected 0 or 1, found {other:?}"))),
        };
        if idx >= cells || num(0)? != (idx / m) as u64 || num(1)? != (idx % m) as u64 {
            return Err(parse_error(
                path,
                line_no,
                "cells must be listed once each in row-major order",
            ));
        }
        let x = u32::try_from(num(2)?).map_err(|_| parse_error(path, line_no, "rating too large"))?;
        ratings.push(x);
        inspected.push(flag(3)?);
        observed.push(flag(4)?);
    }
    if ratings.len() != cells {
        return Err(parse_error(
            path,
            ratings.len(),
            format!("expected {cells} cells, found {}", ratings.len()),
        ));
    }
    Ok(TruthBundle {
        config: meta.config.clone(),
        seed: meta.seed,
        full_ratings: ratings,
        inspected: ResponseMask::from_bits(n, m, inspected)?,
        observed: ResponseMask::from_bits(n, m, observed)?,
    })
}
