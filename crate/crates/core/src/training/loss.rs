use crate::error::{ensure, Result};

/// `sqrt(mean(((pred - truth) / truth)^2))`.
pub fn relative_rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    ensure!(pred.len() == truth.len(), "{} predictions for {} targets", pred.len(), truth.len());
    ensure!(!truth.is_empty(), "loss of an empty set");
    let mut acc = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        ensure!(t != 0.0, "relative loss with a zero target");
        let r = (p - t) / t;
        acc += r * r;
    }
    Ok(libm::sqrt(acc / truth.len() as f64))
}

/// `sqrt(mean((pred - truth)^2))`.
pub fn rmse_coordinate(pred: &[f64], truth: &[f64]) -> Result<f64> {
    ensure!(pred.len() == truth.len(), "{} predictions for {} targets", pred.len(), truth.len());
    ensure!(!truth.is_empty(), "loss of an empty set");
    let acc: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(libm::sqrt(acc / truth.len() as f64))
}
