//! JSON model files.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TrainedModel;
use crate::params::{Factors, Hyperparams, ResponseParams, Variant};
use crate::pmf::PmfModel;
use crate::rapmf::RapmfModel;
use crate::synth::SyntheticConfig;
use crate::CODE_VERSION;

/// Where the training data came from, when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub bundle_seed: u64,
    pub generator: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub code_version: String,
    pub variant: Variant,
    pub k: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub d_levels: u32,
    /// Row-major `n_users × k`.
    pub u: Vec<f64>,
    /// Row-major `n_items × k`.
    pub v: Vec<f64>,
    pub hyper: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ResponseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik_trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
}

impl ModelFile {
    pub fn from_model(model: &TrainedModel, data: Option<DataSource>) -> Self {
        let (factors, d_levels, hyper) = match model {
            TrainedModel::Pmf(m) => (&m.factors, m.d_levels, &m.hyper),
            TrainedModel::Rapmf(m) => (&m.factors, m.d_levels, &m.hyper),
        };
        let mut file = Self {
            code_version: CODE_VERSION.to_string(),
            variant: model.variant(),
            k: factors.k(),
            n_users: factors.n_users(),
            n_items: factors.n_items(),
            d_levels,
            u: factors.u().to_vec(),
            v: factors.v().to_vec(),
            hyper: hyper.clone(),
            response: None,
            beta: None,
            sigma_r: None,
            objective_trace: None,
            loglik_trace: None,
            data,
        };
        match model {
            TrainedModel::Pmf(m) => file.objective_trace = Some(m.objective_trace.clone()),
            TrainedModel::Rapmf(m) => {
                file.response = Some(m.response.clone());
                file.beta = Some(m.hyper.beta);
                file.sigma_r = Some(m.hyper.sigma_r);
                file.loglik_trace = Some(m.loglik_trace.clone());
            }
        }
        file
    }

    /// Rebuilds the model, checking that the fields agree with each other.
    pub fn into_model(self) -> Result<TrainedModel> {
        let factors = Factors::new(self.k, self.n_users, self.n_items, self.u, self.v)?;
        if self.d_levels < 2 {
            return Err(Error::invalid("d_levels must be at least 2"));
        }
        if self.hyper.k != self.k {
            return Err(Error::invalid("hyper.k does not match k"));
        }
        match self.variant {
            Variant::Pmf => {
                if self.response.is_some() {
                    return Err(Error::invalid("a pmf model has no response block"));
                }
                Ok(TrainedModel::Pmf(PmfModel {
                    factors,
                    d_levels: self.d_levels,
                    hyper: self.hyper,
                    objective_trace: self.objective_trace.unwrap_or_default(),
                }))
            }
            variant => {
                let response = self
                    .response
                    .ok_or_else(|| Error::invalid(format!("{variant} model lacks a response block")))?;
                if response.variant() != variant {
                    return Err(Error::invalid(format!(
                        "response block is {} but variant is {variant}",
                        response.variant()
                    )));
                }
                response.validate(self.d_levels, self.k)?;
                if self.beta.is_some_and(|b| b != self.hyper.beta)
                    || self.sigma_r.is_some_and(|s| s != self.hyper.sigma_r)
                {
                    return Err(Error::invalid("beta/sigma_r disagree with hyper"));
                }
                Ok(TrainedModel::Rapmf(RapmfModel {
                    factors,
                    response,
                    hyper: self.hyper,
                    d_levels: self.d_levels,
                    loglik_trace: self.loglik_trace.unwrap_or_default(),
                }))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn save_model(model: &TrainedModel, data: Option<DataSource>, path: &Path) -> Result<()> {
    ModelFile::from_model(model, data).write(path)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    ModelFile::read(path)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Triplet};
    use crate::pmf::train_pmf;
    use crate::rapmf::train_rapmf;

    fn data() -> Dataset {
        let t = (0..40u32)
            .map(|c| Triplet::new(c % 8, (c * 3) % 7, 1 + c % 5))
            .collect::<Vec<_>>();
        let mut t = t;
        t.sort_by_key(|t| (t.user, t.item));
        t.dedup_by_key(|t| (t.user, t.item));
        Dataset::new(8, 7, 5, t).unwrap()
    }

    fn hyper() -> Hyperparams {
        Hyperparams {
            k: 3,
            iterations: 20,
            eta: 0.05,
            beta: 0.3,
            seed: 9,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn round_trips_every_variant_exactly() {
        let d = data();
        let mask = d.response_mask();
        let models = [
            TrainedModel::Pmf(train_pmf(&d, &hyper()).unwrap()),
            TrainedModel::Rapmf(train_rapmf(Variant::RapmfR, &d, &mask, &hyper()).unwrap()),
            TrainedModel::Rapmf(train_rapmf(Variant::RapmfC, &d, &mask, &hyper()).unwrap()),
        ];
        for model in models {
            let json = ModelFile::from_model(&model, None).to_json().unwrap();
            let back = serde_json::from_str::<ModelFile>(&json).unwrap().into_model().unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn mismatched_response_block_is_rejected() {
        let d = data();
        let model = TrainedModel::Rapmf(train_rapmf(Variant::RapmfR, &d, &d.response_mask(), &hyper()).unwrap());
        let mut file = ModelFile::from_model(&model, None);
        file.variant = Variant::RapmfC;
        assert!(file.into_model().is_err());
    }
}
