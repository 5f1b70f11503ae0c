//! Central finite-difference gradient checking.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ResponseMask, Triplet};
use crate::error::{Error, Result};
use crate::params::{Factors, Hyperparams, ResponseParams, Variant};
use crate::pmf::{pmf_gradients, pmf_objective};
use crate::rapmf::{rapmf_gradients, rapmf_loglik};
use crate::rng;

/// Denominator floor for relative errors.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_params: usize,
}

/// Compares `analytic` with `(f(x + ε e_i) - f(x - ε e_i)) / 2ε` for every
/// coordinate. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradcheck(
    mut objective: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> Result<GradcheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if params.len() != analytic.len() {
        return Err(Error::invalid("gradient length differs from parameter length"));
    }
    let mut x = params.to_vec();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
        n_params: params.len(),
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let plus = probe(&mut objective, &x, i)?;
        x[i] = orig - epsilon;
        let minus = probe(&mut objective, &x, i)?;
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > report.max_rel_error || i == 0 {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

fn probe(objective: &mut impl FnMut(&[f64]) -> f64, x: &[f64], index: usize) -> Result<f64> {
    let value = objective(x);
    if !value.is_finite() {
        return Err(Error::ProbeFailure { index, value });
    }
    Ok(value)
}

/// A random small problem for checking model gradients.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub factors: Factors,
    pub response: Option<ResponseParams>,
    pub train: Dataset,
    pub hyper: Hyperparams,
}

impl GradInstance {
    /// `n × m` grid, rank `k`, `d` levels, about 40% of cells observed.
    /// Response parameters are drawn away from zero so every term of the
    /// context-aware gradient is exercised.
    pub fn random(variant: Variant, n: usize, m: usize, k: usize, d: u32, seed: u64) -> Result<Self> {
        let mut r = rng::seeded(seed);
        let factors = Factors::gaussian(k, n, m, 0.8, 0.8, &mut r)?;
        let mut cells = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if r.random::<f64>() < 0.4 {
                    cells.push(Triplet::new(i as u32, j as u32, r.random_range(1..=d)));
                }
            }
        }
        let train = Dataset::new(n, m, d, cells)?;
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| r.random_range(-1.0..1.0)).collect() };
        let response = match variant {
            Variant::Pmf => None,
            Variant::RapmfR => Some(ResponseParams::RatingDominant {
                mu_raw: draw(d as usize),
            }),
            Variant::RapmfC => Some(ResponseParams::ContextAware {
                delta: draw(d as usize),
                theta_u: draw(k),
                theta_v: draw(k),
            }),
        };
        let hyper = Hyperparams {
            k,
            lambda_u: 0.3,
            lambda_v: 0.2,
            lambda_mu: 0.5,
            beta: 0.7,
            ..Hyperparams::default()
        };
        Ok(Self {
            factors,
            response,
            train,
            hyper,
        })
    }

    fn mask(&self) -> ResponseMask {
        self.train.response_mask()
    }

    fn flat(&self) -> Vec<f64> {
        let mut x = [self.factors.u(), self.factors.v()].concat();
        if let Some(r) = &self.response {
            x.extend(r.to_flat());
        }
        x
    }

    fn unflatten(&self, x: &[f64]) -> (Factors, Option<ResponseParams>) {
        let f = &self.factors;
        let (nu, nv) = (f.u().len(), f.v().len());
        let factors = Factors::new(
            f.k(),
            f.n_users(),
            f.n_items(),
            x[..nu].to_vec(),
            x[nu..nu + nv].to_vec(),
        )
        .expect("same shape");
        let response = self.response.as_ref().map(|r| r.with_flat(&x[nu + nv..]));
        (factors, response)
    }

    /// Named parameter blocks as `(name, start, end)` ranges into the flat vector.
    pub fn blocks(&self) -> Vec<(&'static str, usize, usize)> {
        let nu = self.factors.u().len();
        let nv = self.factors.v().len();
        let mut out = vec![("u", 0, nu), ("v", nu, nu + nv)];
        let s = nu + nv;
        match &self.response {
            None => {}
            Some(ResponseParams::RatingDominant { mu_raw }) => out.push(("mu", s, s + mu_raw.len())),
            Some(ResponseParams::ContextAware { delta, theta_u, .. }) => {
                let (d, k) = (delta.len(), theta_u.len());
                out.push(("delta", s, s + d));
                out.push(("theta_u", s + d, s + d + k));
                out.push(("theta_v", s + d + k, s + d + 2 * k));
            }
        }
        out
    }

    /// Analytic gradient of the model's objective (the PMF loss, or the
    /// response-aware log-likelihood), flattened.
    pub fn analytic(&self) -> Result<Vec<f64>> {
        match &self.response {
            None => {
                let (gu, gv) = pmf_gradients(&self.factors, &self.train, &self.hyper)?;
                Ok([gu, gv].concat())
            }
            Some(r) => {
                let g = rapmf_gradients(&self.factors, r, &self.train, &self.mask(), &self.hyper)?;
                Ok([g.grad_u, g.grad_v, g.grad_response.to_flat()].concat())
            }
        }
    }

    /// The model's objective at a flattened parameter vector.
    pub fn objective(&self) -> impl Fn(&[f64]) -> f64 + '_ {
        let mask = self.mask();
        move |x: &[f64]| {
            let (f, r) = self.unflatten(x);
            let v = match &r {
                None => pmf_objective(&f, &self.train, &self.hyper),
                Some(r) => rapmf_loglik(&f, r, &self.train, &mask, &self.hyper),
            };
            v.unwrap_or(f64::NAN)
        }
    }

    /// Gradient check per block.
    pub fn check(&self, epsilon: f64) -> Result<Vec<(&'static str, GradcheckReport)>> {
        let x = self.flat();
        let analytic = self.analytic()?;
        let objective = self.objective();
        self.blocks()
            .into_iter()
            .map(|(name, start, end)| {
                let mut xb = x.clone();
                let report = gradcheck(
                    |sub: &[f64]| {
                        xb[start..end].copy_from_slice(sub);
                        objective(&xb)
                    },
                    &x[start..end],
                    &analytic[start..end],
                    epsilon,
                )?;
                Ok((name, report))
            })
            .collect()
    }
}
