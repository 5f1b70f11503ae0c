use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::rmse;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::params::{Factors, Hyperparams, Variant};
use crate::pmf::{train_pmf, PmfModel, Predict};
use crate::rapmf::{train_rapmf, RapmfModel};
use crate::rng;
use crate::synth::ProtocolSplit;

const STREAM_FOLDS: u64 = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Test cells drawn from the observed cells.
    Traditional,
    /// Test cells drawn from cells the user never inspected.
    Realistic,
    /// Test cells the user inspected but chose not to rate.
    Adversarial,
    Validation,
    /// One fold of k-fold cross-validation over observed ratings.
    CrossValidation,
}

impl Protocol {
    pub const TEST: [Protocol; 3] = [Protocol::Traditional, Protocol::Realistic, Protocol::Adversarial];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Traditional => "traditional",
            Protocol::Realistic => "realistic",
            Protocol::Adversarial => "adversarial",
            Protocol::Validation => "validation",
            Protocol::CrossValidation => "cross_validation",
        }
    }

    pub fn test_set(self, split: &ProtocolSplit) -> Option<&Dataset> {
        match self {
            Protocol::Traditional => Some(&split.test_traditional),
            Protocol::Realistic => Some(&split.test_realistic),
            Protocol::Adversarial => Some(&split.test_adversarial),
            Protocol::Validation => Some(&split.validation),
            Protocol::CrossValidation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub variant: Variant,
    pub protocol: Protocol,
    pub rmse: f64,
    pub n_test: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
}

/// Either kind of trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Pmf(PmfModel),
    Rapmf(RapmfModel),
}

impl TrainedModel {
    pub fn variant(&self) -> Variant {
        match self {
            TrainedModel::Pmf(_) => Variant::Pmf,
            TrainedModel::Rapmf(m) => m.variant(),
        }
    }

    pub fn hyper(&self) -> &Hyperparams {
        match self {
            TrainedModel::Pmf(m) => &m.hyper,
            TrainedModel::Rapmf(m) => &m.hyper,
        }
    }

    /// Objective trace for PMF, log-likelihood trace otherwise.
    pub fn trace(&self) -> &[f64] {
        match self {
            TrainedModel::Pmf(m) => &m.objective_trace,
            TrainedModel::Rapmf(m) => &m.loglik_trace,
        }
    }
}

impl Predict for TrainedModel {
    fn factors(&self) -> &Factors {
        match self {
            TrainedModel::Pmf(m) => &m.factors,
            TrainedModel::Rapmf(m) => &m.factors,
        }
    }

    fn d_levels(&self) -> u32 {
        match self {
            TrainedModel::Pmf(m) => m.d_levels,
            TrainedModel::Rapmf(m) => m.d_levels,
        }
    }
}

/// Trains `variant` on `train`; response-aware variants treat exactly the
/// training cells as observed.
pub fn train_variant(variant: Variant, train: &Dataset, hyper: &Hyperparams) -> Result<TrainedModel> {
    match variant {
        Variant::Pmf => train_pmf(train, hyper).map(TrainedModel::Pmf),
        v => train_rapmf(v, train, &train.response_mask(), hyper).map(TrainedModel::Rapmf),
    }
}

/// Scores a trained model on the traditional, realistic and adversarial
/// test sets of `split`.
pub fn evaluate_split(model: &TrainedModel, split: &ProtocolSplit) -> Result<Vec<ExperimentResult>> {
    Protocol::TEST
        .iter()
        .map(|&protocol| {
            let test = protocol.test_set(split).expect("test protocol");
            Ok(ExperimentResult {
                variant: model.variant(),
                protocol,
                rmse: rmse(model, test)?,
                n_test: test.len(),
                seed: model.hyper().seed,
                hyper: model.hyper().clone(),
            })
        })
        .collect()
}

/// Trains once on `split.train` and evaluates all three protocols.
pub fn run_protocol(split: &ProtocolSplit, variant: Variant, hyper: &Hyperparams) -> Result<Vec<ExperimentResult>> {
    let model = train_variant(variant, &split.train, hyper)?;
    evaluate_split(&model, split)
}

/// Contiguous folds over a shuffled order; sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::InsufficientData(format!(
            "{n} ratings cannot fill {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derive(seed, STREAM_FOLDS));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

/// k-fold cross-validation RMSE, one entry per fold.
pub fn cross_validate(
    dataset: &Dataset,
    variant: Variant,
    hyper: &Hyperparams,
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let assignment = fold_assignment(dataset.len(), folds, seed)?;
    let all = dataset.triplets();
    let mut scores = Vec::with_capacity(folds);
    for held in &assignment {
        let mut in_test = vec![false; all.len()];
        for &idx in held {
            in_test[idx] = true;
        }
        let train: Vec<_> = all.iter().zip(&in_test).filter(|(_, &t)| !t).map(|(t, _)| *t).collect();
        let mut test: Vec<_> = held.iter().map(|&idx| all[idx]).collect();
        test.sort_unstable();
        let model = train_variant(variant, &dataset.with_triplets(train)?, hyper)?;
        scores.push(rmse(&model, &dataset.with_triplets(test)?)?);
    }
    Ok(scores)
}
