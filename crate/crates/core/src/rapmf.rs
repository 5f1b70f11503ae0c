//! Response-aware PMF: the joint log-likelihood of ratings and the response
//! pattern, its gradients, and the alternating trainer.
//!
//! The log-likelihood, up to an additive constant, is
//!
//! ```text
//! L = β Σ_ij log Σ_k α_kij N(t(k) | g(U_i^T V_j), σ_r²)
//!     - (1 / σ_r²) [ ½ Σ_train (t(x) - g(U_i^T V_j))²
//!                    + λ_U/2 ‖U‖² + λ_V/2 ‖V‖² + λ_μ/2 ‖response params‖² ]
//! ```
//!
//! Training ascends `σ_r² · L`, which has the same maximizer. With `β = 0`
//! its `U`, `V` gradient is exactly minus the PMF gradient, so the trainer
//! reproduces PMF step for step.

use crate::dataset::{Dataset, ResponseMask};
use crate::error::{Error, Result};
use crate::params::{Factors, Hyperparams, ResponseParams, Variant};
use crate::pmf::{add_ridge, data_term, initial_factors, Predict};
use crate::response::{check_shapes, response_pass, Want};

#[derive(Debug, Clone, PartialEq)]
pub struct RapmfModel {
    pub factors: Factors,
    pub response: ResponseParams,
    pub hyper: Hyperparams,
    pub d_levels: u32,
    /// Log-likelihood after each iteration.
    pub loglik_trace: Vec<f64>,
}

impl RapmfModel {
    pub fn variant(&self) -> Variant {
        self.response.variant()
    }
}

impl Predict for RapmfModel {
    fn factors(&self) -> &Factors {
        &self.factors
    }

    fn d_levels(&self) -> u32 {
        self.d_levels
    }
}

/// Ascent gradients of the log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct RapmfGradients {
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
    /// Same shape as the response parameters.
    pub grad_response: ResponseParams,
}

/// Value and gradients of `σ_r² · L`.
struct Scaled {
    value: f64,
    grad_u: Vec<f64>,
    grad_v: Vec<f64>,
    grad_response: Option<ResponseParams>,
}

fn check_inputs(factors: &Factors, response: &ResponseParams, train: &Dataset, observed: &ResponseMask) -> Result<()> {
    factors.check_dims(train.n_users(), train.n_items())?;
    check_shapes(factors, response, observed)?;
    response.validate(train.d_levels(), factors.k())
}

fn scaled(
    factors: &Factors,
    response: &ResponseParams,
    train: &Dataset,
    observed: &ResponseMask,
    hyper: &Hyperparams,
    want: Want,
) -> Scaled {
    let var = hyper.sigma_r * hyper.sigma_r;
    let data = data_term(factors, train);
    let mut value = -(data.value
        + 0.5 * hyper.lambda_u * factors.u_norm_sq()
        + 0.5 * hyper.lambda_v * factors.v_norm_sq()
        + 0.5 * hyper.lambda_mu * response.norm_sq());

    let (mut grad_u, mut grad_v) = (Vec::new(), Vec::new());
    if want.uv {
        // same arithmetic as the PMF loss gradient, then negated
        grad_u = data.grad_u;
        grad_v = data.grad_v;
        add_ridge(&mut grad_u, factors.u(), hyper.lambda_u);
        add_ridge(&mut grad_v, factors.v(), hyper.lambda_v);
        for g in grad_u.iter_mut().chain(grad_v.iter_mut()) {
            *g = -*g;
        }
    }
    let mut grad_response = want.params.then(|| {
        let ridge: Vec<f64> = response.to_flat().iter().map(|x| -hyper.lambda_mu * x).collect();
        response.with_flat(&ridge)
    });

    if hyper.beta != 0.0 {
        let w = var * hyper.beta;
        let term = response_pass(factors, response, observed, hyper.sigma_r, want, hyper.execution);
        value += w * term.value;
        if want.uv {
            axpy(&mut grad_u, &term.grad_u, w);
            axpy(&mut grad_v, &term.grad_v, w);
        }
        if let (Some(g), Some(t)) = (grad_response.as_mut(), term.grad_params.as_ref()) {
            g.add_scaled(t, w);
        }
    }
    Scaled {
        value,
        grad_u,
        grad_v,
        grad_response,
    }
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// The response-aware log-likelihood `L` (up to its additive constant).
pub fn rapmf_loglik(
    factors: &Factors,
    response: &ResponseParams,
    train: &Dataset,
    observed: &ResponseMask,
    hyper: &Hyperparams,
) -> Result<f64> {
    check_inputs(factors, response, train, observed)?;
    let s = scaled(factors, response, train, observed, hyper, Want::VALUE);
    Ok(s.value / (hyper.sigma_r * hyper.sigma_r))
}

/// Exact ascent gradient of [`rapmf_loglik`] for either response model.
pub fn rapmf_gradients(
    factors: &Factors,
    response: &ResponseParams,
    train: &Dataset,
    observed: &ResponseMask,
    hyper: &Hyperparams,
) -> Result<RapmfGradients> {
    check_inputs(factors, response, train, observed)?;
    let all = Want {
        value: true,
        uv: true,
        params: true,
    };
    let s = scaled(factors, response, train, observed, hyper, all);
    let inv_var = 1.0 / (hyper.sigma_r * hyper.sigma_r);
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * inv_var).collect::<Vec<_>>();
    let g = s.grad_response.expect("requested");
    Ok(RapmfGradients {
        grad_u: scale(s.grad_u),
        grad_v: scale(s.grad_v),
        grad_response: g.with_flat(&scale(g.to_flat())),
    })
}

/// Gradients for the rating-dominant model at raw parameters `mu_raw`.
pub fn rapmf_gradients_r(
    factors: &Factors,
    mu_raw: &[f64],
    train: &Dataset,
    observed: &ResponseMask,
    hyper: &Hyperparams,
) -> Result<RapmfGradients> {
    let response = ResponseParams::RatingDominant {
        mu_raw: mu_raw.to_vec(),
    };
    rapmf_gradients(factors, &response, train, observed, hyper)
}

/// Gradients for the context-aware model.
pub fn rapmf_gradients_c(
    factors: &Factors,
    delta: &[f64],
    theta_u: &[f64],
    theta_v: &[f64],
    train: &Dataset,
    observed: &ResponseMask,
    hyper: &Hyperparams,
) -> Result<RapmfGradients> {
    let response = ResponseParams::ContextAware {
        delta: delta.to_vec(),
        theta_u: theta_u.to_vec(),
        theta_v: theta_v.to_vec(),
    };
    rapmf_gradients(factors, &response, train, observed, hyper)
}

/// Alternating gradient ascent.
///
/// Each iteration moves `U` and `V` together along their gradient at the
/// current parameters, then moves the response parameters along their
/// gradient re-evaluated at the new `U`, `V`. `observed` must mark exactly
/// the training cells.
pub fn train_rapmf(
    variant: Variant,
    train: &Dataset,
    observed: &ResponseMask,
    hyper: &Hyperparams,
) -> Result<RapmfModel> {
    hyper.validate()?;
    let mut response = ResponseParams::zeros(variant, train.d_levels(), hyper.k)
        .ok_or_else(|| Error::invalid("train_rapmf needs a response-aware variant"))?;
    check_training_mask(train, observed)?;
    let mut factors = initial_factors(hyper.k, train.n_users(), train.n_items(), hyper.seed)?;
    let inv_var = 1.0 / (hyper.sigma_r * hyper.sigma_r);
    let uv = Want {
        value: true,
        uv: true,
        params: false,
    };
    let params = Want {
        value: false,
        uv: false,
        params: true,
    };

    let mut trace = Vec::with_capacity(hyper.iterations);
    for iteration in 1..=hyper.iterations {
        let s = scaled(&factors, &response, train, observed, hyper, uv);
        if iteration > 1 {
            record(&mut trace, s.value * inv_var, iteration - 1)?;
        }
        ascend(factors.u_mut(), &s.grad_u, hyper.eta);
        ascend(factors.v_mut(), &s.grad_v, hyper.eta);

        let s = scaled(&factors, &response, train, observed, hyper, params);
        let g = s.grad_response.expect("requested");
        response.add_scaled(&g, hyper.eta);
    }
    let last = scaled(&factors, &response, train, observed, hyper, Want::VALUE);
    record(&mut trace, last.value * inv_var, hyper.iterations)?;
    if !factors.is_finite() || !response.is_finite() {
        return Err(Error::Diverged {
            iteration: hyper.iterations,
            value: f64::NAN,
        });
    }
    Ok(RapmfModel {
        factors,
        response,
        hyper: hyper.clone(),
        d_levels: train.d_levels(),
        loglik_trace: trace,
    })
}

fn check_training_mask(train: &Dataset, observed: &ResponseMask) -> Result<()> {
    if observed.n_users() != train.n_users() || observed.n_items() != train.n_items() {
        return Err(Error::invalid("mask dimensions differ from the training set"));
    }
    let all_marked = train
        .triplets()
        .iter()
        .all(|t| observed.get(t.user as usize, t.item as usize));
    if !all_marked || observed.count() != train.len() {
        return Err(Error::invalid("observed mask must mark exactly the training cells"));
    }
    Ok(())
}

fn ascend(params: &mut [f64], grad: &[f64], eta: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p += eta * g;
    }
}

fn record(trace: &mut Vec<f64>, value: f64, iteration: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Diverged { iteration, value });
    }
    trace.push(value);
    Ok(())
}
