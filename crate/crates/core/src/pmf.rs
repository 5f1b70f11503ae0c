//! Probabilistic matrix factorization baseline.
//!
//! Ratings are mapped to `[0, 1]` and compared with `g(U_i^T V_j)`; the
//! loss is the regularized squared error
//! `E = ½ Σ (t(x) - g(U_i^T V_j))² + λ_U/2 ‖U‖² + λ_V/2 ‖V‖²`.

use crate::codec::{logistic, map_rating_unchecked, unmap_rating_unchecked};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::params::{Factors, Hyperparams};
use crate::rng;

/// Standard deviation of the initial latent features.
pub const INIT_STD: f64 = 0.1;
const STREAM_INIT: u64 = 17;

/// Anything that predicts ratings from latent factors.
pub trait Predict {
    fn factors(&self) -> &Factors;
    fn d_levels(&self) -> u32;

    /// Predicted rating on the `1..=D` scale.
    fn predict(&self, user: usize, item: usize) -> Result<f64> {
        predict(self.factors(), user, item, self.d_levels())
    }
}

/// `unmap(g(U_i^T V_j))`, always inside `[1, D]`.
pub fn predict(factors: &Factors, user: usize, item: usize, d_levels: u32) -> Result<f64> {
    if user >= factors.n_users() || item >= factors.n_items() {
        return Err(Error::invalid(format!(
            "cell ({user}, {item}) outside {}x{}",
            factors.n_users(),
            factors.n_items()
        )));
    }
    if d_levels < 2 {
        return Err(Error::invalid("d_levels must be >= 2"));
    }
    Ok(unmap_rating_unchecked(
        logistic(factors.score(user, item)).value,
        d_levels,
    ))
}

/// Initial `U`, `V` for a training run: i.i.d. `N(0, 0.1²)`.
pub fn initial_factors(k: usize, n_users: usize, n_items: usize, seed: u64) -> Result<Factors> {
    let mut rng = rng::derive(seed, STREAM_INIT);
    Factors::gaussian(k, n_users, n_items, INIT_STD, INIT_STD, &mut rng)
}

/// Squared-error part of the loss and its gradient.
pub(crate) struct DataTerm {
    pub value: f64,
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
}

/// `½ Σ_train (t(x) - g(s))²` and its gradient with respect to `U`, `V`.
///
/// Triplets are visited in dataset order, so the result is reproducible
/// bit for bit.
pub(crate) fn data_term(factors: &Factors, train: &Dataset) -> DataTerm {
    let k = factors.k();
    let d = train.d_levels();
    let mut grad_u = vec![0.0; factors.u().len()];
    let mut grad_v = vec![0.0; factors.v().len()];
    let mut value = 0.0;
    for t in train.triplets() {
        let (i, j) = (t.user as usize, t.item as usize);
        let g = logistic(factors.score(i, j));
        let resid = map_rating_unchecked(t.rating, d) - g.value;
        value += 0.5 * resid * resid;
        let coeff = -resid * g.derivative;
        let (ui, vj) = (factors.user(i), factors.item(j));
        for c in 0..k {
            grad_u[i * k + c] += coeff * vj[c];
            grad_v[j * k + c] += coeff * ui[c];
        }
    }
    DataTerm { value, grad_u, grad_v }
}

fn check_train(factors: &Factors, train: &Dataset) -> Result<()> {
    factors.check_dims(train.n_users(), train.n_items())
}

/// The PMF loss `E`.
pub fn pmf_objective(factors: &Factors, train: &Dataset, hyper: &Hyperparams) -> Result<f64> {
    check_train(factors, train)?;
    Ok(objective_unchecked(factors, train, hyper))
}

fn objective_unchecked(factors: &Factors, train: &Dataset, hyper: &Hyperparams) -> f64 {
    let mut value = 0.0;
    let d = train.d_levels();
    for t in train.triplets() {
        let p = logistic(factors.score(t.user as usize, t.item as usize)).value;
        let resid = map_rating_unchecked(t.rating, d) - p;
        value += 0.5 * resid * resid;
    }
    value + 0.5 * hyper.lambda_u * factors.u_norm_sq() + 0.5 * hyper.lambda_v * factors.v_norm_sq()
}

/// Gradient of `E` with respect to `U` and `V` (user-major, like [`Factors`]).
pub fn pmf_gradients(factors: &Factors, train: &Dataset, hyper: &Hyperparams) -> Result<(Vec<f64>, Vec<f64>)> {
    check_train(factors, train)?;
    let (_, gu, gv) = loss_and_gradients(factors, train, hyper);
    Ok((gu, gv))
}

fn loss_and_gradients(factors: &Factors, train: &Dataset, hyper: &Hyperparams) -> (f64, Vec<f64>, Vec<f64>) {
    let DataTerm {
        value,
        mut grad_u,
        mut grad_v,
    } = data_term(factors, train);
    add_ridge(&mut grad_u, factors.u(), hyper.lambda_u);
    add_ridge(&mut grad_v, factors.v(), hyper.lambda_v);
    let loss = value + 0.5 * hyper.lambda_u * factors.u_norm_sq() + 0.5 * hyper.lambda_v * factors.v_norm_sq();
    (loss, grad_u, grad_v)
}

pub(crate) fn add_ridge(grad: &mut [f64], params: &[f64], lambda: f64) {
    for (g, p) in grad.iter_mut().zip(params) {
        *g += lambda * p;
    }
}

/// `params -= eta * grad`.
pub(crate) fn descend(params: &mut [f64], grad: &[f64], eta: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= eta * g;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmfModel {
    pub factors: Factors,
    pub d_levels: u32,
    pub hyper: Hyperparams,
    /// Loss after each iteration.
    pub objective_trace: Vec<f64>,
}

impl Predict for PmfModel {
    fn factors(&self) -> &Factors {
        &self.factors
    }

    fn d_levels(&self) -> u32 {
        self.d_levels
    }
}

/// Full-batch gradient descent on `E` from [`initial_factors`].
pub fn train_pmf(train: &Dataset, hyper: &Hyperparams) -> Result<PmfModel> {
    hyper.validate()?;
    let mut factors = initial_factors(hyper.k, train.n_users(), train.n_items(), hyper.seed)?;
    let mut trace = Vec::with_capacity(hyper.iterations);
    for iteration in 1..=hyper.iterations {
        let (loss, gu, gv) = loss_and_gradients(&factors, train, hyper);
        if iteration > 1 {
            record(&mut trace, loss, iteration - 1)?;
        }
        pmf_step(&mut factors, &gu, &gv, hyper.eta);
    }
    let last = objective_unchecked(&factors, train, hyper);
    record(&mut trace, last, hyper.iterations)?;
    Ok(PmfModel {
        factors,
        d_levels: train.d_levels(),
        hyper: hyper.clone(),
        objective_trace: trace,
    })
}

pub(crate) fn pmf_step(factors: &mut Factors, grad_u: &[f64], grad_v: &[f64], eta: f64) {
    descend(factors.u_mut(), grad_u, eta);
    descend(factors.v_mut(), grad_v, eta);
}

fn record(trace: &mut Vec<f64>, value: f64, iteration: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Diverged { iteration, value });
    }
    trace.push(value);
    Ok(())
}
