//! Exhaustive hyperparameter sweeps scored on the validation set.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::rmse;
use super::protocol::{train_variant, TrainedModel};
use crate::error::{Error, Result};
use crate::params::{Execution, Hyperparams, Variant};
use crate::synth::ProtocolSplit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub lambda_uv: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda_mu: Vec<f64>,
}

impl Grids {
    /// `λ ∈ {1e-3, …, 1e2}`, `β ∈ {0, 1e-3, 1e-2, 1e-1, 1}`, `λ_μ` fixed.
    pub fn coarse(lambda_mu: f64) -> Self {
        Self {
            lambda_uv: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
            beta: vec![0.0, 1e-3, 1e-2, 1e-1, 1.0],
            lambda_mu: vec![lambda_mu],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda_uv.len() * self.beta.len() * self.lambda_mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, `lambda_uv` outermost.
    pub fn cells(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &l in &self.lambda_uv {
            for &b in &self.beta {
                for &lm in &self.lambda_mu {
                    out.push(Hyperparams {
                        beta: b,
                        lambda_mu: lm,
                        ..base.clone().with_lambda_uv(l)
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_uv: f64,
    pub beta: f64,
    pub lambda_mu: f64,
    /// `None` when training failed; see `error`.
    pub validation_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub variant: Variant,
    pub best: Hyperparams,
    pub best_rmse: f64,
    pub table: Vec<SweepRow>,
    /// The winning model itself; not serialized.
    #[serde(skip)]
    pub model: Option<TrainedModel>,
}

/// Trains one model per grid cell on `split.train` and keeps the one with the
/// lowest validation RMSE. Ties go to the larger `λ_UV`, then the smaller
/// `β`, then the larger `λ_μ`. Cells that fail to train are recorded and
/// skipped.
pub fn grid_search(split: &ProtocolSplit, variant: Variant, base: &Hyperparams, grids: &Grids) -> Result<GridOutcome> {
    if grids.is_empty() {
        return Err(Error::invalid("every grid must be non-empty"));
    }
    let cells = grids.cells(base);
    let (table, models) = sweep(split, variant, &cells, base.execution);
    select(variant, cells, table, models)
}

fn sweep(
    split: &ProtocolSplit,
    variant: Variant,
    cells: &[Hyperparams],
    execution: Execution,
) -> (Vec<SweepRow>, Vec<Option<TrainedModel>>) {
    let run = |h: &Hyperparams| -> (SweepRow, Option<TrainedModel>) {
        let scored = h
            .validate()
            .and_then(|_| train_variant(variant, &split.train, h))
            .and_then(|model| Ok((rmse(&model, &split.validation)?, model)));
        let (validation_rmse, error, model) = match scored {
            Ok((r, model)) => (Some(r), None, Some(model)),
            Err(e) => (None, Some(e.to_string()), None),
        };
        let row = SweepRow {
            lambda_uv: h.lambda_u,
            beta: h.beta,
            lambda_mu: h.lambda_mu,
            validation_rmse,
            error,
        };
        (row, model)
    };
    match execution {
        Execution::Serial => cells.iter().map(run).unzip(),
        Execution::Parallel => cells.par_iter().map(run).unzip(),
    }
}

fn select(
    variant: Variant,
    cells: Vec<Hyperparams>,
    table: Vec<SweepRow>,
    mut models: Vec<Option<TrainedModel>>,
) -> Result<GridOutcome> {
    let best_idx = (0..table.len())
        .filter(|&i| table[i].validation_rmse.is_some())
        .min_by(|&a, &b| rank(&table[a], &table[b]))
        .ok_or_else(|| Error::InsufficientData("no grid cell trained successfully".into()))?;
    Ok(GridOutcome {
        variant,
        best: cells[best_idx].clone(),
        best_rmse: table[best_idx].validation_rmse.expect("filtered"),
        table,
        model: models.swap_remove(best_idx),
    })
}

fn rank(a: &SweepRow, b: &SweepRow) -> Ordering {
    let (ra, rb) = (a.validation_rmse.unwrap(), b.validation_rmse.unwrap());
    ra.total_cmp(&rb)
        .then(b.lambda_uv.total_cmp(&a.lambda_uv))
        .then(a.beta.total_cmp(&b.beta))
        .then(b.lambda_mu.total_cmp(&a.lambda_mu))
}

/// Fine-tuning offsets around a coarse optimum, in decades.
const LAMBDA_REFINE: [f64; 4] = [-0.5, -0.25, 0.25, 0.5];
const BETA_REFINE: [f64; 2] = [-0.5, 0.5];

/// Points `center · 10^offset`, skipping any already in `seen` and any
/// above `cap`.
fn refine(center: f64, offsets: &[f64], seen: &[f64], cap: f64) -> Vec<f64> {
    if center <= 0.0 {
        return Vec::new();
    }
    offsets
        .iter()
        .map(|o| center * 10f64.powf(*o))
        .filter(|v| *v <= cap && !seen.contains(v))
        .collect()
}

/// Runs a second sweep over `extra` cells and re-selects over both tables.
fn extend(
    split: &ProtocolSplit,
    coarse: GridOutcome,
    coarse_cells: Vec<Hyperparams>,
    extra: Vec<Hyperparams>,
) -> Result<GridOutcome> {
    if extra.is_empty() {
        return Ok(coarse);
    }
    let (table, models) = sweep(split, coarse.variant, &extra, coarse.best.execution);
    // only the coarse winner is still held; the other coarse cells lost to it
    let mut held: Vec<Option<TrainedModel>> = coarse_cells.iter().map(|_| None).collect();
    if let Some(idx) = coarse_cells.iter().position(|c| *c == coarse.best) {
        held[idx] = coarse.model;
    }
    let mut cells = coarse_cells;
    cells.extend(extra);
    let mut rows = coarse.table;
    rows.extend(table);
    held.extend(models);
    select(coarse.variant, cells, rows, held)
}

/// Result of [`tune_two_stage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStage {
    /// `λ_UV` sweep of PMF.
    pub pmf: GridOutcome,
    /// `β`/`λ_μ` sweep of the response-aware variant at the PMF `λ_UV`.
    pub response: GridOutcome,
}

/// Tunes `λ_UV` for PMF over `grids.lambda_uv`; with `fine_tune` also tries
/// half-decade neighbours of the coarse winner.
pub fn tune_lambda(split: &ProtocolSplit, base: &Hyperparams, grids: &Grids, fine_tune: bool) -> Result<GridOutcome> {
    let pmf_grid = Grids {
        lambda_uv: grids.lambda_uv.clone(),
        beta: vec![0.0],
        lambda_mu: vec![base.lambda_mu],
    };
    let pmf = grid_search(split, Variant::Pmf, base, &pmf_grid)?;
    if !fine_tune {
        return Ok(pmf);
    }
    let extra = Grids {
        lambda_uv: refine(pmf.best.lambda_u, &LAMBDA_REFINE, &grids.lambda_uv, f64::INFINITY),
        ..pmf_grid.clone()
    };
    extend(split, pmf, pmf_grid.cells(base), extra.cells(base))
}

/// Two-stage tuning: `λ_UV` for PMF first (see [`tune_lambda`]), then `β`
/// (and `λ_μ`) for the response-aware variant with `λ_UV` fixed at the PMF
/// optimum. With `fine_tune`, the `β` stage also tries half-decade
/// neighbours of its coarse winner.
pub fn tune_two_stage(
    split: &ProtocolSplit,
    variant: Variant,
    base: &Hyperparams,
    grids: &Grids,
    fine_tune: bool,
) -> Result<TwoStage> {
    let pmf = tune_lambda(split, base, grids, fine_tune)?;
    let lambda = pmf.best.lambda_u;
    let response_grid = Grids {
        lambda_uv: vec![lambda],
        beta: grids.beta.clone(),
        lambda_mu: grids.lambda_mu.clone(),
    };
    let at_lambda = base.clone().with_lambda_uv(lambda);
    let mut response = grid_search(split, variant, &at_lambda, &response_grid)?;
    if fine_tune {
        let extra = Grids {
            beta: refine(response.best.beta, &BETA_REFINE, &grids.beta, 1.0),
            lambda_mu: vec![response.best.lambda_mu],
            ..response_grid.clone()
        };
        response = extend(
            split,
            response,
            response_grid.cells(&at_lambda),
            extra.cells(&at_lambda),
        )?;
    }
    Ok(TwoStage { pmf, response })
}
