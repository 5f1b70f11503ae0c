//! Synthetic not-missing-at-random data.
//!
//! Generation happens in two steps. A data model draws Gaussian user and
//! item features and turns every inner product into a full rating matrix.
//! A response model then decides which cells a user inspected and, among
//! those, which ones the user rated, with a rating probability that depends
//! on the rating value itself.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::codec::sigmoid;
use crate::dataset::{Dataset, ResponseMask, Triplet};
use crate::error::{Error, Result};
use crate::params::Factors;
use crate::rng;

const STREAM_FACTORS: u64 = 1;
const STREAM_MASKS: u64 = 2;
const STREAM_SPLIT: u64 = 3;

/// Share of the un-inspected cells held out for hyperparameter tuning.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub m: usize,
    pub d_levels: u32,
    pub k: usize,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub p_inspect: f64,
    /// Probability that an inspected cell with rating `k` is rated, `k = 1..=D`.
    pub p_rate: Vec<f64>,
}

impl Default for SyntheticConfig {
    /// 1000 × 1000 users/items, five levels, rank 5, 20% inspection and a
    /// strong preference for rating items the user loves.
    fn default() -> Self {
        Self {
            n: 1000,
            m: 1000,
            d_levels: 5,
            k: 5,
            sigma_u: 1.0,
            sigma_v: 1.0,
            p_inspect: 0.2,
            p_rate: vec![0.073, 0.068, 0.163, 0.308, 0.931],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.k == 0 {
            return Err(Error::invalid("n, m and k must be positive"));
        }
        if self.d_levels < 2 {
            return Err(Error::invalid("d_levels must be >= 2"));
        }
        if self.p_rate.len() != self.d_levels as usize {
            return Err(Error::invalid(format!(
                "p_rate has {} entries, expected d_levels = {}",
                self.p_rate.len(),
                self.d_levels
            )));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_inspect) || !self.p_rate.iter().all(|&p| prob(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        if !(self.sigma_u > 0.0 && self.sigma_v > 0.0 && self.sigma_u.is_finite() && self.sigma_v.is_finite()) {
            return Err(Error::invalid("sigma_u and sigma_v must be positive"));
        }
        Ok(())
    }
}

/// Ground truth for one synthetic trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBundle {
    pub config: SyntheticConfig,
    pub seed: u64,
    /// Row-major `n × m` ratings in `1..=D`.
    pub full_ratings: Vec<u32>,
    pub inspected: ResponseMask,
    pub observed: ResponseMask,
}

impl TruthBundle {
    pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<Self> {
        let factors = generate_factors(config, seed)?;
        let full_ratings = generate_full_ratings(&factors, config.d_levels);
        let (inspected, observed) = generate_response_masks(&full_ratings, config, seed)?;
        Ok(Self {
            config: config.clone(),
            seed,
            full_ratings,
            inspected,
            observed,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn rating(&self, i: usize, j: usize) -> u32 {
        self.full_ratings[i * self.config.m + j]
    }

    /// Checks the mask and rating invariants.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cells = self.n() * self.m();
        if self.full_ratings.len() != cells
            || self.inspected.bits().len() != cells
            || self.observed.bits().len() != cells
        {
            return Err(Error::invalid("bundle arrays do not match n x m"));
        }
        if self.full_ratings.iter().any(|&x| x < 1 || x > self.config.d_levels) {
            return Err(Error::invalid("full rating outside 1..=D"));
        }
        if self
            .observed
            .bits()
            .iter()
            .zip(self.inspected.bits())
            .any(|(&o, &i)| o && !i)
        {
            return Err(Error::invalid("observed cell that was never inspected"));
        }
        Ok(())
    }
}

/// Draws `U_i ~ N(0, σ_U² I)` and `V_j ~ N(0, σ_V² I)`.
pub fn generate_factors(config: &SyntheticConfig, seed: u64) -> Result<Factors> {
    config.validate()?;
    let mut rng = rng::derive(seed, STREAM_FACTORS);
    Factors::gaussian(config.k, config.n, config.m, config.sigma_u, config.sigma_v, &mut rng)
}

/// `X_ij = ceil(g(U_i^T V_j) · D)`, clamped into `1..=D`.
pub fn generate_full_ratings(factors: &Factors, d_levels: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(factors.n_users() * factors.n_items());
    for i in 0..factors.n_users() {
        for j in 0..factors.n_items() {
            out.push(rating_from_score(factors.score(i, j), d_levels));
        }
    }
    out
}

pub(crate) fn rating_from_probability(p: f64, d_levels: u32) -> u32 {
    let scaled = (p * f64::from(d_levels)).ceil();
    // g underflows to exactly 0 only for scores below about -745
    (scaled as u32).clamp(1, d_levels)
}

fn rating_from_score(score: f64, d_levels: u32) -> u32 {
    rating_from_probability(sigmoid(score), d_levels)
}

/// Bernoulli inspection per cell, then a Bernoulli rating decision with the
/// level-specific probability for inspected cells.
pub fn generate_response_masks(
    full_ratings: &[u32],
    config: &SyntheticConfig,
    seed: u64,
) -> Result<(ResponseMask, ResponseMask)> {
    config.validate()?;
    let (n, m) = (config.n, config.m);
    if full_ratings.len() != n * m {
        return Err(Error::invalid("rating matrix does not match config dimensions"));
    }
    let mut rng = rng::derive(seed, STREAM_MASKS);
    let mut inspected = Vec::with_capacity(n * m);
    let mut observed = Vec::with_capacity(n * m);
    for &x in full_ratings {
        if x < 1 || x > config.d_levels {
            return Err(Error::invalid(format!("rating {x} outside 1..={}", config.d_levels)));
        }
        let ins = rng.random::<f64>() < config.p_inspect;
        let obs = ins && rng.random::<f64>() < config.p_rate[(x - 1) as usize];
        inspected.push(ins);
        observed.push(obs);
    }
    Ok((
        ResponseMask::from_bits(n, m, inspected)?,
        ResponseMask::from_bits(n, m, observed)?,
    ))
}

/// Train set plus the test sets of the three evaluation protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSplit {
    pub train: Dataset,
    /// Held-out observed cells.
    pub test_traditional: Dataset,
    /// Un-inspected cells not used for validation.
    pub test_realistic: Dataset,
    /// Inspected but unrated cells.
    pub test_adversarial: Dataset,
    /// Un-inspected cells reserved for hyperparameter tuning.
    pub validation: Dataset,
}

impl ProtocolSplit {
    /// The five datasets with their file stems, in canonical order.
    pub fn parts(&self) -> [(&'static str, &Dataset); 5] {
        [
            ("train", &self.train),
            ("test_traditional", &self.test_traditional),
            ("test_realistic", &self.test_realistic),
            ("test_adversarial", &self.test_adversarial),
            ("validation", &self.validation),
        ]
    }
}

/// Partitions a bundle into the protocol datasets.
///
/// Observed cells are split 50/50 into train and traditional test, every
/// inspected-unrated cell goes to the adversarial test, and un-inspected
/// cells are split 10/90 into validation and realistic test. Each dataset
/// lists its cells in row-major order.
pub fn split_protocols(bundle: &TruthBundle, seed: u64) -> Result<ProtocolSplit> {
    bundle.validate()?;
    let (n, m, d) = (bundle.n(), bundle.m(), bundle.config.d_levels);
    let mut observed = Vec::new();
    let mut adversarial = Vec::new();
    let mut uninspected = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let t = Triplet::new(i as u32, j as u32, bundle.rating(i, j));
            match (bundle.inspected.get(i, j), bundle.observed.get(i, j)) {
                (_, true) => observed.push(t),
                (true, false) => adversarial.push(t),
                (false, false) => uninspected.push(t),
            }
        }
    }
    if observed.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} observed cells; at least 2 are needed to split train/test",
            observed.len()
        )));
    }
    let mut rng = rng::derive(seed, STREAM_SPLIT);
    observed.shuffle(&mut rng);
    uninspected.shuffle(&mut rng);

    let n_train = observed.len() / 2;
    let test_traditional = observed.split_off(n_train);
    let train = observed;
    let n_validation = (uninspected.len() as f64 * VALIDATION_FRACTION).round() as usize;
    let test_realistic = uninspected.split_off(n_validation);
    let validation = uninspected;

    let build = |mut cells: Vec<Triplet>| {
        cells.sort_unstable();
        Dataset::new(n, m, d, cells)
    };
    Ok(ProtocolSplit {
        train: build(train)?,
        test_traditional: build(test_traditional)?,
        test_realistic: build(test_realistic)?,
        test_adversarial: build(adversarial)?,
        validation: build(validation)?,
    })
}
