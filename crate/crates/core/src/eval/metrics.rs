use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pmf::Predict;

/// Root mean square error of predictions on the `1..=D` scale.
pub fn rmse(model: &impl Predict, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("rmse of an empty test set"));
    }
    let mut sse = 0.0;
    for t in test.triplets() {
        let err = model.predict(t.user as usize, t.item as usize)? - f64::from(t.rating);
        sse += err * err;
    }
    Ok((sse / test.len() as f64).sqrt())
}

/// `100 · (baseline - model) / baseline`; positive means `model` is better.
pub fn relative_improvement(baseline_rmse: f64, model_rmse: f64) -> Result<f64> {
    if !(baseline_rmse > 0.0) {
        return Err(Error::invalid(format!(
            "baseline RMSE must be positive, got {baseline_rmse}"
        )));
    }
    Ok(100.0 * (baseline_rmse - model_rmse) / baseline_rmse)
}
