//! Model parameters and training hyperparameters.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Which model a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "pmf")]
    Pmf,
    /// Rating-dominant response model.
    #[serde(rename = "rapmf-r")]
    RapmfR,
    /// Context-aware response model.
    #[serde(rename = "rapmf-c")]
    RapmfC,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Pmf, Variant::RapmfR, Variant::RapmfC];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pmf => "pmf",
            Variant::RapmfR => "rapmf-r",
            Variant::RapmfC => "rapmf-c",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pmf" => Ok(Variant::Pmf),
            "rapmf-r" => Ok(Variant::RapmfR),
            "rapmf-c" => Ok(Variant::RapmfC),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?} (expected pmf, rapmf-r or rapmf-c)"
            ))),
        }
    }
}

/// Latent user and item features.
///
/// Stored user-major: the `k` features of user `i` are contiguous, which is
/// the row-major `N × K` layout used by the model file.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    k: usize,
    n_users: usize,
    n_items: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Factors {
    pub fn new(k: usize, n_users: usize, n_items: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if k == 0 || n_users == 0 || n_items == 0 {
            return Err(Error::invalid("factor dimensions must be positive"));
        }
        if u.len() != k * n_users || v.len() != k * n_items {
            return Err(Error::invalid(format!(
                "factor buffers have {} / {} entries, expected {} / {}",
                u.len(),
                v.len(),
                k * n_users,
                k * n_items
            )));
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::invalid("factor entries must be finite"));
        }
        Ok(Self {
            k,
            n_users,
            n_items,
            u,
            v,
        })
    }

    pub fn zeros(k: usize, n_users: usize, n_items: usize) -> Self {
        Self {
            k,
            n_users,
            n_items,
            u: vec![0.0; k * n_users],
            v: vec![0.0; k * n_items],
        }
    }

    /// I.i.d. `N(0, std²)` entries; all of `U` is drawn before `V`.
    pub fn gaussian(k: usize, n_users: usize, n_items: usize, std_u: f64, std_v: f64, rng: &mut Rng) -> Result<Self> {
        let nu = Normal::new(0.0, std_u).map_err(|e| Error::invalid(format!("std_u: {e}")))?;
        let nv = Normal::new(0.0, std_v).map_err(|e| Error::invalid(format!("std_v: {e}")))?;
        let u = (0..k * n_users).map(|_| nu.sample(rng)).collect();
        let v = (0..k * n_items).map(|_| nv.sample(rng)).collect();
        Self::new(k, n_users, n_items, u, v)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn user(&self, i: usize) -> &[f64] {
        &self.u[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn item(&self, j: usize) -> &[f64] {
        &self.v[j * self.k..(j + 1) * self.k]
    }

    /// `U_i^T V_j`.
    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        dot(self.user(i), self.item(j))
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub(crate) fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn u_norm_sq(&self) -> f64 {
        self.u.iter().map(|x| x * x).sum()
    }

    pub fn v_norm_sq(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub(crate) fn check_dims(&self, n_users: usize, n_items: usize) -> Result<()> {
        if self.n_users != n_users || self.n_items != n_items {
            return Err(Error::invalid(format!(
                "factors are {}x{}, data is {n_users}x{n_items}",
                self.n_users, self.n_items
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters of a response model, stored before the logistic map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseParams {
    /// One raw parameter per rating level; `g(mu_raw[k-1])` is the
    /// probability that a cell with rating `k` gets rated.
    RatingDominant { mu_raw: Vec<f64> },
    /// Per-level offsets plus user and item feature weights.
    ContextAware {
        delta: Vec<f64>,
        theta_u: Vec<f64>,
        theta_v: Vec<f64>,
    },
}

impl ResponseParams {
    /// Zero-initialized parameters (every response probability 0.5).
    pub fn zeros(variant: Variant, d_levels: u32, k: usize) -> Option<Self> {
        let d = d_levels as usize;
        match variant {
            Variant::Pmf => None,
            Variant::RapmfR => Some(ResponseParams::RatingDominant { mu_raw: vec![0.0; d] }),
            Variant::RapmfC => Some(ResponseParams::ContextAware {
                delta: vec![0.0; d],
                theta_u: vec![0.0; k],
                theta_v: vec![0.0; k],
            }),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            ResponseParams::RatingDominant { .. } => Variant::RapmfR,
            ResponseParams::ContextAware { .. } => Variant::RapmfC,
        }
    }

    /// Number of rating levels covered.
    pub fn d_levels(&self) -> usize {
        match self {
            ResponseParams::RatingDominant { mu_raw } => mu_raw.len(),
            ResponseParams::ContextAware { delta, .. } => delta.len(),
        }
    }

    /// The per-level parameters (`mu_raw` or `delta`).
    pub fn levels(&self) -> &[f64] {
        match self {
            ResponseParams::RatingDominant { mu_raw } => mu_raw,
            ResponseParams::ContextAware { delta, .. } => delta,
        }
    }

    /// All parameters in a fixed order: levels, then `theta_u`, then `theta_v`.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            ResponseParams::RatingDominant { mu_raw } => mu_raw.clone(),
            ResponseParams::ContextAware {
                delta,
                theta_u,
                theta_v,
            } => delta.iter().chain(theta_u).chain(theta_v).copied().collect(),
        }
    }

    /// Inverse of [`to_flat`](Self::to_flat) using `self` as the shape.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        match self {
            ResponseParams::RatingDominant { mu_raw } => {
                assert_eq!(flat.len(), mu_raw.len());
                ResponseParams::RatingDominant { mu_raw: flat.to_vec() }
            }
            ResponseParams::ContextAware { delta, theta_u, .. } => {
                let (d, k) = (delta.len(), theta_u.len());
                assert_eq!(flat.len(), d + 2 * k);
                ResponseParams::ContextAware {
                    delta: flat[..d].to_vec(),
                    theta_u: flat[d..d + k].to_vec(),
                    theta_v: flat[d + k..].to_vec(),
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            ResponseParams::RatingDominant { mu_raw } => mu_raw.iter().map(|x| x * x).sum(),
            ResponseParams::ContextAware {
                delta,
                theta_u,
                theta_v,
            } => delta.iter().chain(theta_u).chain(theta_v).map(|x| x * x).sum(),
        }
    }

    /// `self += step * other`; shapes must match.
    pub(crate) fn add_scaled(&mut self, other: &ResponseParams, step: f64) {
        fn axpy(y: &mut [f64], x: &[f64], a: f64) {
            for (y, x) in y.iter_mut().zip(x) {
                *y += a * x;
            }
        }
        match (self, other) {
            (ResponseParams::RatingDominant { mu_raw }, ResponseParams::RatingDominant { mu_raw: g }) => {
                axpy(mu_raw, g, step)
            }
            (
                ResponseParams::ContextAware {
                    delta,
                    theta_u,
                    theta_v,
                },
                ResponseParams::ContextAware {
                    delta: gd,
                    theta_u: gu,
                    theta_v: gv,
                },
            ) => {
                axpy(delta, gd, step);
                axpy(theta_u, gu, step);
                axpy(theta_v, gv, step);
            }
            _ => panic!("response parameter variants differ"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    pub(crate) fn validate(&self, d_levels: u32, k: usize) -> Result<()> {
        if self.d_levels() != d_levels as usize {
            return Err(Error::invalid(format!(
                "response parameters cover {} levels, data has {d_levels}",
                self.d_levels()
            )));
        }
        if let ResponseParams::ContextAware { theta_u, theta_v, .. } = self {
            if theta_u.len() != k || theta_v.len() != k {
                return Err(Error::invalid(format!("theta vectors must have length k = {k}")));
            }
        }
        if !self.is_finite() {
            return Err(Error::invalid("response parameters must be finite"));
        }
        Ok(())
    }
}

/// How dense per-cell sums are reduced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Single thread, fixed order. Bitwise reproducible.
    #[default]
    Serial,
    /// Users are split into a fixed number of blocks reduced on the rayon
    /// pool and summed in block order, so results do not depend on the
    /// number of threads.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_mu: f64,
    /// Weight of the response model, in `[0, 1]`.
    pub beta: f64,
    pub eta: f64,
    /// Width of the rating Gaussian in mapped `[0, 1]` units.
    pub sigma_r: f64,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 5,
            lambda_u: 0.1,
            lambda_v: 0.1,
            lambda_mu: 1.0,
            beta: 0.0,
            eta: 0.005,
            sigma_r: 0.25,
            iterations: 500,
            seed: 0,
            execution: Execution::Serial,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("hyperparameter {what}")));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.lambda_u >= 0.0 && self.lambda_v >= 0.0 && self.lambda_mu >= 0.0) {
            return bad("lambda_* must be >= 0");
        }
        if !self.lambda_u.is_finite() || !self.lambda_v.is_finite() || !self.lambda_mu.is_finite() {
            return bad("lambda_* must be finite");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be > 0");
        }
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite()) {
            return bad("sigma_r must be > 0");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        Ok(())
    }

    /// Sets `lambda_u` and `lambda_v` together.
    pub fn with_lambda_uv(mut self, lambda: f64) -> Self {
        self.lambda_u = lambda;
        self.lambda_v = lambda;
        self
    }
}
