//! Evaluation metrics over test splits: Pk-accuracy, R-squared, RMSE,
//! prediction time per sample, and serialized model size.
//!
//! R-squared uses the population convention, so `r = 1 - (rmse / sigma)^2`
//! holds exactly and r goes negative precisely when the RMSE exceeds the
//! target population standard deviation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetSplit;
use crate::kernel::clock::Clock;
use crate::kernel::ModuleKind;
use crate::params::vectorize;
use crate::regressors::io::model_size_kb;
use crate::regressors::{PredictError, RegressorId, TrainedModel};

/// Metrics for one (module, regressor) pair. `acc` is P20-accuracy, `acc10`
/// P10-accuracy; `r` and `rmse` are computed in scaled-target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub module: ModuleKind,
    pub regressor: RegressorId,
    pub acc: f64,
    pub acc10: f64,
    pub r: f64,
    pub rmse: f64,
    pub tps_ms: f64,
    pub size_kb: f64,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: truth has {truth}, predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("truth contains a non-positive value; relative error is undefined")]
    NonPositiveTruth,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("truth values are all equal; R-squared is undefined")]
    ZeroVariance,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Params(#[from] crate::params::ParamError),
}

/// Fraction of samples whose relative prediction error is within k percent,
/// boundary inclusive.
pub fn pk_accuracy(truth: &[f64], pred: &[f64], k_percent: f64) -> Result<f64, MetricsError> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    if truth.iter().any(|&t| t <= 0.0) {
        return Err(MetricsError::NonPositiveTruth);
    }
    let within = truth
        .iter()
        .zip(pred)
        .filter(|(t, p)| ((*p - *t) / *t).abs() <= k_percent / 100.0)
        .count();
    Ok(within as f64 / truth.len() as f64)
}

/// R-squared, population convention: `1 - sum((y - yhat)^2) / sum((y - ybar)^2)`.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    if truth.len() < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: truth.len() });
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_total: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_total == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_residual: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_residual / ss_total)
}

/// Root mean squared error.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64, MetricsError> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    let ss: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Amortized prediction time per sample in milliseconds: wall time of a
/// full `predict_batch` pass divided by the sample count, median over
/// `repeats` timed passes after `warmups` untimed ones. Runs
/// single-threaded; callers must not compete for the CPU.
pub fn time_per_sample(
    model: &TrainedModel,
    inputs: &[Vec<f64>],
    warmups: usize,
    repeats: usize,
    clock: &dyn Clock,
) -> Result<f64, MetricsError> {
    if inputs.len() < 10 {
        return Err(MetricsError::TooFewSamples { needed: 10, got: inputs.len() });
    }
    for _ in 0..warmups {
        std::hint::black_box(model.predict_batch(inputs)?);
    }
    let mut samples = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = clock.now();
        std::hint::black_box(model.predict_batch(inputs)?);
        let end = clock.now();
        samples.push((end - start).as_secs_f64() * 1e3 / inputs.len() as f64);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    Ok(if n % 2 == 1 { samples[n / 2] } else { 0.5 * (samples[n / 2 - 1] + samples[n / 2]) })
}

/// Evaluate a trained model on the test split of its module: Pk-accuracy on
/// latencies in milliseconds, R-squared and RMSE on scaled targets, timing
/// and size metrics.
pub fn evaluate(model: &TrainedModel, split: &DatasetSplit, clock: &dyn Clock) -> Result<EvalResult, MetricsError> {
    let xs: Vec<Vec<f64>> =
        split.test.iter().map(|r| vectorize(r, &model.schema)).collect::<Result<_, _>>()?;
    let truth_ms: Vec<f64> = split.test.iter().map(|r| r.latency_ms).collect();
    let pred_ms = model.predict_batch(&xs)?;

    let acc = pk_accuracy(&truth_ms, &pred_ms, 20.0)?;
    let acc10 = pk_accuracy(&truth_ms, &pred_ms, 10.0)?;

    let truth_scaled: Vec<f64> = truth_ms.iter().map(|&y| model.scale_target(y)).collect();
    let pred_scaled: Vec<f64> = pred_ms.iter().map(|&y| model.scale_target(y)).collect();
    let r = r_squared(&truth_scaled, &pred_scaled)?;
    let rmse_scaled = rmse(&truth_scaled, &pred_scaled)?;

    let tps_ms = time_per_sample(model, &xs, 2, 5, clock)?;
    let size_kb = model_size_kb(model);

    Ok(EvalResult {
        module: model.kind,
        regressor: model.id,
        acc,
        acc10,
        r,
        rmse: rmse_scaled,
        tps_ms,
        size_kb,
    })
}

#[cfg(test)]
mod tests;
