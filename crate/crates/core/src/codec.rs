//! Rating-scale codec and the logistic function.

use crate::error::{Error, Result};

/// Maps an integer rating in `1..=d_levels` linearly onto `[0, 1]`.
pub fn map_rating(rating: u32, d_levels: u32) -> Result<f64> {
    if d_levels < 2 {
        return Err(Error::invalid(format!("d_levels must be >= 2, got {d_levels}")));
    }
    if rating < 1 || rating > d_levels {
        return Err(Error::invalid(format!("rating {rating} outside 1..={d_levels}")));
    }
    Ok(map_rating_unchecked(rating, d_levels))
}

#[inline]
pub(crate) fn map_rating_unchecked(rating: u32, d_levels: u32) -> f64 {
    f64::from(rating - 1) / f64::from(d_levels - 1)
}

/// Inverse of [`map_rating`]: takes a value in `[0, 1]` back to `[1, D]`.
pub fn unmap_rating(p: f64, d_levels: u32) -> Result<f64> {
    if d_levels < 2 {
        return Err(Error::invalid(format!("d_levels must be >= 2, got {d_levels}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("mapped value {p} outside [0, 1]")));
    }
    Ok(unmap_rating_unchecked(p, d_levels))
}

#[inline]
pub(crate) fn unmap_rating_unchecked(p: f64, d_levels: u32) -> f64 {
    p * f64::from(d_levels - 1) + 1.0
}

/// Value and derivative of the logistic function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic {
    pub value: f64,
    pub derivative: f64,
}

/// Numerically stable logistic `1 / (1 + exp(-x))` and its derivative.
#[inline]
pub fn logistic(x: f64) -> Logistic {
    // exp is only ever taken of a non-positive argument
    let (value, complement) = logistic_pair(x);
    Logistic {
        value,
        derivative: value * complement,
    }
}

/// `(g(x), 1 - g(x))`, each computed without cancellation.
#[inline]
pub(crate) fn logistic_pair(x: f64) -> (f64, f64) {
    // Branch-free: the sign of x is close to random in dense passes.
    let e = (-x.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e * big;
    if x >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    logistic(x).value
}
