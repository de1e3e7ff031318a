use serde::{Deserialize, Serialize};

use super::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// `1 − ‖Y − Ŷ‖_F / ‖Y‖_F`.
    pub accuracy: f64,
}

/// RMSE, MAE and accuracy of `pred` against `truth` (same flat layout).
pub fn compute_metrics(truth: &[f64], pred: &[f64]) -> Result<Metrics, ExperimentError> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(ExperimentError::Metrics(format!(
            "{} targets against {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let n = truth.len() as f64;
    let (mut sq, mut abs, mut norm) = (0.0, 0.0, 0.0);
    for (y, p) in truth.iter().zip(pred) {
        let e = y - p;
        sq += e * e;
        abs += e.abs();
        norm += y * y;
    }
    if norm == 0.0 {
        return Err(ExperimentError::Metrics("accuracy is undefined for an all-zero target".into()));
    }
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        accuracy: 1.0 - (sq / norm).sqrt(),
    })
}

/// Mean absolute error per column of row-major `rows × cols` data.
pub fn per_sensor_mae(truth: &[f64], pred: &[f64], cols: usize) -> Vec<f64> {
    assert_eq!(truth.len(), pred.len());
    assert!(cols > 0 && truth.len() % cols == 0);
    let rows = truth.len() / cols;
    let mut out = vec![0.0; cols];
    for (i, (y, p)) in truth.iter().zip(pred).enumerate() {
        out[i % cols] += (y - p).abs();
    }
    out.iter_mut().for_each(|v| *v /= rows as f64);
    out
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `(enhanced − baseline) / baseline`.
pub fn relative_delta(baseline: f64, enhanced: f64) -> f64 {
    (enhanced - baseline) / baseline
}
