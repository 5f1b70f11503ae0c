//! Response models: how likely a cell is to be rated.
//!
//! Both models put a Bernoulli variable on "cell `(i, j)` gets rated given
//! its rating is `k`". The soft likelihood of one cell mixes the Bernoulli
//! factor over rating levels with Gaussian weights centred on the current
//! prediction:
//!
//! ```text
//! log Σ_k α_kij · N(t(k) | g(U_i^T V_j), σ_r²)
//! α_kij = μ_k        if the cell is observed
//!       = 1 - μ_k    otherwise
//! ```
//!
//! Everything is evaluated in the mapped `[0, 1]` rating space.

use rayon::prelude::*;

use crate::codec::{logistic, logistic_pair, map_rating_unchecked};
use crate::dataset::ResponseMask;
use crate::error::{Error, Result};
use crate::params::{dot, Execution, Factors, Hyperparams, ResponseParams};

/// User blocks used by [`Execution::Parallel`]. Fixed so the reduction
/// order, and therefore the result, does not depend on the thread count.
const PARALLEL_BLOCKS: usize = 32;

/// Probability that cell `(user, item)` is rated if its rating is `level`.
pub fn response_prob(params: &ResponseParams, factors: &Factors, user: usize, item: usize, level: u32) -> Result<f64> {
    if user >= factors.n_users() || item >= factors.n_items() {
        return Err(Error::invalid(format!("cell ({user}, {item}) out of range")));
    }
    if level < 1 || level as usize > params.d_levels() {
        return Err(Error::invalid(format!(
            "rating {level} outside 1..={}",
            params.d_levels()
        )));
    }
    let k = (level - 1) as usize;
    let z = match params {
        ResponseParams::RatingDominant { mu_raw } => mu_raw[k],
        ResponseParams::ContextAware {
            delta,
            theta_u,
            theta_v,
        } => {
            if theta_u.len() != factors.k() || theta_v.len() != factors.k() {
                return Err(Error::invalid("theta length does not match factor rank"));
            }
            delta[k] + dot(factors.user(user), theta_u) + dot(factors.item(item), theta_v)
        }
    };
    Ok(logistic(z).value)
}

/// The Bernoulli factor: `mu` for an observed cell, `1 - mu` otherwise.
pub fn alpha(mu: f64, observed: bool) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::invalid(format!("response probability {mu} outside (0, 1)")));
    }
    Ok(if observed { mu } else { 1.0 - mu })
}

/// `β · Σ_ij log Σ_k α_kij N(t(k) | g(U_i^T V_j), σ_r²)` over every cell.
pub fn soft_response_loglik(
    factors: &Factors,
    params: &ResponseParams,
    observed: &ResponseMask,
    hyper: &Hyperparams,
) -> Result<f64> {
    check_shapes(factors, params, observed)?;
    if hyper.beta == 0.0 {
        return Ok(0.0);
    }
    let term = response_pass(factors, params, observed, hyper.sigma_r, Want::VALUE, hyper.execution);
    Ok(hyper.beta * term.value)
}

/// Winner-take-all response log-likelihood given the full rating matrix:
/// `Σ_ij log(μ_{X_ij})` over observed cells plus `log(1 - μ_{X_ij})` over the
/// rest. `mu` holds probabilities, not raw parameters.
pub fn hard_response_loglik(full_ratings: &[u32], observed: &ResponseMask, mu: &[f64]) -> Result<f64> {
    if full_ratings.len() != observed.bits().len() {
        return Err(Error::invalid("rating matrix and mask differ in size"));
    }
    if mu.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::invalid("mu must hold probabilities"));
    }
    let mut total = 0.0;
    for (&x, &r) in full_ratings.iter().zip(observed.bits()) {
        if x < 1 || x as usize > mu.len() {
            return Err(Error::invalid(format!("rating {x} outside 1..={}", mu.len())));
        }
        let p = mu[(x - 1) as usize];
        let a = if r { p } else { 1.0 - p };
        if a == 0.0 {
            return Err(Error::Domain(format!(
                "mu_{x} = {p} contradicts an {} cell; log-likelihood is -inf",
                if r { "observed" } else { "unobserved" }
            )));
        }
        total += a.ln();
    }
    Ok(total)
}

pub(crate) fn check_shapes(factors: &Factors, params: &ResponseParams, observed: &ResponseMask) -> Result<()> {
    factors.check_dims(observed.n_users(), observed.n_items())?;
    if let ResponseParams::ContextAware { theta_u, theta_v, .. } = params {
        if theta_u.len() != factors.k() || theta_v.len() != factors.k() {
            return Err(Error::invalid("theta length does not match factor rank"));
        }
    }
    Ok(())
}

/// What a dense pass should compute besides the value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Want {
    pub value: bool,
    pub uv: bool,
    pub params: bool,
}

impl Want {
    pub const VALUE: Want = Want {
        value: true,
        uv: false,
        params: false,
    };
}

/// Unweighted response term `Σ_ij log Z_ij` and its gradients.
#[derive(Debug, Clone)]
pub(crate) struct ResponseTerm {
    pub value: f64,
    /// Empty unless requested.
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
    pub grad_params: Option<ResponseParams>,
}

/// Gaussian weights over the mapped rating grid.
struct LevelGrid {
    targets: Vec<f64>,
    inv_two_var: f64,
    inv_var: f64,
    log_norm: f64,
    /// `h / σ²` for grid spacing `h`.
    slope: f64,
    /// `exp(-(t(k+1)² - t(k)²) / 2σ²)`.
    ratio: Vec<f64>,
    anchored: bool,
}

/// The anchored recurrence spans a dynamic range of `exp(1 / 2σ²)` both
/// ways; past this it could overflow and direct exps are used instead.
const MAX_ANCHOR_EXPONENT: f64 = 300.0;

impl LevelGrid {
    fn new(d_levels: usize, sigma: f64) -> Self {
        let var = sigma * sigma;
        let targets: Vec<f64> = (1..=d_levels as u32)
            .map(|k| map_rating_unchecked(k, d_levels as u32))
            .collect();
        Self {
            ratio: targets
                .windows(2)
                .map(|w| (-(w[1] * w[1] - w[0] * w[0]) * 0.5 / var).exp())
                .collect(),
            targets,
            inv_two_var: 0.5 / var,
            inv_var: 1.0 / var,
            log_norm: -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln(),
            slope: 1.0 / ((d_levels as f64 - 1.0) * var),
            anchored: 0.5 / var <= MAX_ANCHOR_EXPONENT,
        }
    }

    /// Fills `weights` with `exp(e_k - shift)` where `e_k` is the Gaussian
    /// exponent at level `k`, and returns `shift`.
    ///
    /// Anchored form: `e_k = -p²/2σ² + t_k p/σ² - t_k²/2σ²`, so with
    /// `shift = -p²/2σ²` each weight is the previous one times
    /// `exp(h p / σ²) · ratio[k]`, starting from 1 at level 0.
    #[inline]
    fn weights(&self, p: f64, weights: &mut [f64]) -> f64 {
        if !self.anchored {
            let mut peak = f64::NEG_INFINITY;
            for (w, &t) in weights.iter_mut().zip(&self.targets) {
                let diff = t - p;
                *w = -diff * diff * self.inv_two_var;
                peak = peak.max(*w);
            }
            for w in weights.iter_mut() {
                *w = (*w - peak).exp();
            }
            return peak;
        }
        let b = (self.slope * p).exp();
        let mut w = 1.0;
        weights[0] = w;
        for (out, r) in weights[1..].iter_mut().zip(&self.ratio) {
            w *= b * r;
            *out = w;
        }
        -p * p * self.inv_two_var
    }

    /// Evaluates one cell. `weights` receives the Gaussian weights scaled by
    /// a common factor; returns `(log Z, ∂ log Z / ∂s, 1 / Z_scaled)`.
    #[inline]
    fn cell(&self, p: f64, gp: f64, alpha: &[f64], weights: &mut [f64], with_value: bool) -> (f64, f64, f64) {
        let shift = self.weights(p, weights);
        let mut z = 0.0;
        let mut zt = 0.0;
        for ((&a, &w), &t) in alpha.iter().zip(weights.iter()).zip(&self.targets) {
            let aw = a * w;
            z += aw;
            zt += aw * t;
        }
        let inv_z = 1.0 / z;
        let log_z = if with_value {
            z.ln() + shift + self.log_norm
        } else {
            0.0
        };
        // Σ α w (t - p) / Z = Σ α w t / Z - p
        (log_z, gp * self.inv_var * (zt * inv_z - p), inv_z)
    }
}

/// Per-level response probabilities for one cell.
struct Levels {
    prob: Vec<f64>,
    comp: Vec<f64>,
    deriv: Vec<f64>,
}

impl Levels {
    fn new(d: usize) -> Self {
        Self {
            prob: vec![0.0; d],
            comp: vec![0.0; d],
            deriv: vec![0.0; d],
        }
    }

    #[inline]
    fn fill(&mut self, raw: &[f64], shift: f64) {
        for k in 0..raw.len() {
            let (g, c) = logistic_pair(raw[k] + shift);
            self.prob[k] = g;
            self.comp[k] = c;
            self.deriv[k] = g * c;
        }
    }
}

/// Accumulators for one block of users.
struct Partial {
    value: f64,
    grad_v: Vec<f64>,
    levels: Vec<f64>,
    theta_u: Vec<f64>,
    /// `Σ_i ∂ log Z_ij / ∂(context)` per item; context-aware only.
    item_w: Vec<f64>,
}

struct PassCtx<'a> {
    factors: &'a Factors,
    mask: &'a ResponseMask,
    grid: LevelGrid,
    levels_raw: &'a [f64],
    /// `Some((θ_U, θ_V, V_j^T θ_V per item))` for the context-aware model.
    context: Option<(&'a [f64], &'a [f64], Vec<f64>)>,
    want: Want,
}

impl PassCtx<'_> {
    fn run_block(&self, users: std::ops::Range<usize>, grad_u: &mut [f64]) -> Partial {
        let f = self.factors;
        let (k, m, d) = (f.k(), f.n_items(), self.levels_raw.len());
        let context = self.context.is_some();
        let need_dz = self.want.params || (context && self.want.uv);
        let mut out = Partial {
            value: 0.0,
            grad_v: if self.want.uv { vec![0.0; m * k] } else { Vec::new() },
            levels: vec![0.0; d],
            theta_u: vec![0.0; if context { k } else { 0 }],
            item_w: vec![0.0; if context { m } else { 0 }],
        };
        let mut weights = vec![0.0; d];
        let mut lv = Levels::new(d);
        if !context {
            lv.fill(self.levels_raw, 0.0);
        }
        let first = users.start;
        for i in users {
            let ui = f.user(i);
            let row = self.mask.row(i);
            let user_ctx = self.context.as_ref().map_or(0.0, |(tu, _, _)| dot(ui, tu));
            let mut user_w = 0.0;
            let gu_off = (i - first) * k;
            for j in 0..m {
                let vj = f.item(j);
                let (p, pc) = logistic_pair(dot(ui, vj));
                if let Some((_, _, item_ctx)) = &self.context {
                    lv.fill(self.levels_raw, user_ctx + item_ctx[j]);
                }
                let observed = row[j];
                let (log_z, dlogz_ds, inv_z) = if observed {
                    self.grid.cell(p, p * pc, &lv.prob, &mut weights, self.want.value)
                } else {
                    self.grid.cell(p, p * pc, &lv.comp, &mut weights, self.want.value)
                };
                out.value += log_z;
                if self.want.uv {
                    let gv = &mut out.grad_v[j * k..(j + 1) * k];
                    let gu = &mut grad_u[gu_off..gu_off + k];
                    for c in 0..k {
                        gu[c] += dlogz_ds * vj[c];
                        gv[c] += dlogz_ds * ui[c];
                    }
                }
                if need_dz {
                    let sign = if observed { inv_z } else { -inv_z };
                    let mut cell_w = 0.0;
                    for ((acc, &g), &w) in out.levels.iter_mut().zip(&lv.deriv).zip(&weights) {
                        let dz = sign * g * w;
                        *acc += dz;
                        cell_w += dz;
                    }
                    if context {
                        user_w += cell_w;
                        out.item_w[j] += cell_w;
                    }
                }
            }
            if let Some((theta_u, _, _)) = &self.context {
                for c in 0..k {
                    out.theta_u[c] += user_w * ui[c];
                    if self.want.uv {
                        grad_u[gu_off + c] += user_w * theta_u[c];
                    }
                }
            }
        }
        out
    }
}

/// One pass over every cell of the grid.
pub(crate) fn response_pass(
    factors: &Factors,
    params: &ResponseParams,
    mask: &ResponseMask,
    sigma_r: f64,
    want: Want,
    execution: Execution,
) -> ResponseTerm {
    let (n, m, k) = (factors.n_users(), factors.n_items(), factors.k());
    let context = match params {
        ResponseParams::RatingDominant { .. } => None,
        ResponseParams::ContextAware { theta_u, theta_v, .. } => {
            let item_ctx = (0..m).map(|j| dot(factors.item(j), theta_v)).collect();
            Some((theta_u.as_slice(), theta_v.as_slice(), item_ctx))
        }
    };
    let ctx = PassCtx {
        factors,
        mask,
        grid: LevelGrid::new(params.d_levels(), sigma_r),
        levels_raw: params.levels(),
        context,
        want,
    };
    let mut grad_u = vec![0.0; if want.uv { n * k } else { 0 }];

    let partials: Vec<Partial> = match execution {
        Execution::Serial => vec![ctx.run_block(0..n, &mut grad_u)],
        Execution::Parallel => {
            let block = n.div_ceil(PARALLEL_BLOCKS.min(n));
            let ranges: Vec<_> = (0..n).step_by(block).map(|s| s..(s + block).min(n)).collect();
            if want.uv {
                grad_u
                    .par_chunks_mut(block * k)
                    .zip(ranges.into_par_iter())
                    .map(|(gu, r)| ctx.run_block(r, gu))
                    .collect()
            } else {
                ranges.into_par_iter().map(|r| ctx.run_block(r, &mut [])).collect()
            }
        }
    };

    let mut parts = partials.into_iter();
    let mut total = parts.next().expect("at least one block");
    for p in parts {
        total.value += p.value;
        add_into(&mut total.grad_v, &p.grad_v);
        add_into(&mut total.levels, &p.levels);
        add_into(&mut total.theta_u, &p.theta_u);
        add_into(&mut total.item_w, &p.item_w);
    }

    let mut grad_v = total.grad_v;
    let grad_params = match (&ctx.context, want.params) {
        (None, true) => Some(ResponseParams::RatingDominant { mu_raw: total.levels }),
        (Some((_, theta_v, _)), _) => {
            let mut g_theta_v = vec![0.0; k];
            for j in 0..m {
                let w = total.item_w[j];
                let vj = factors.item(j);
                for c in 0..k {
                    g_theta_v[c] += w * vj[c];
                    if want.uv {
                        grad_v[j * k + c] += w * theta_v[c];
                    }
                }
            }
            want.params.then(|| ResponseParams::ContextAware {
                delta: total.levels,
                theta_u: total.theta_u,
                theta_v: g_theta_v,
            })
        }
        (None, false) => None,
    };
    ResponseTerm {
        value: total.value,
        grad_u,
        grad_v,
        grad_params,
    }
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}
