//! Error metrics over ordinal class targets (STABLE = 0, LIGHT_WORSENING =
//! 1, WORSENING = 2).

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{argmax, Classifier, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target is identical and RAE is undefined.
    pub rae_pct: Option<f64>,
    pub correct_count: usize,
    pub instance_count: usize,
}

/// MAE, RMSE and RAE of real-valued predictions. `correct_count` is left at
/// zero; `evaluate_classifier` fills it.
pub fn regression_metrics(targets: &[f64], predictions: &[f64]) -> Result<Metrics> {
    if targets.is_empty() || targets.len() != predictions.len() {
        return Err(Error::invalid(format!(
            "need equal non-empty target and prediction lists, got {} and {}",
            targets.len(),
            predictions.len()
        )));
    }
    let n = targets.len() as f64;
    let abs: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (p - y).abs())
        .sum();
    let sq: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (p - y) * (p - y))
        .sum();
    let mean = targets.iter().sum::<f64>() / n;
    let spread: f64 = targets.iter().map(|y| (y - mean).abs()).sum();
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        rae_pct: (spread > 0.0).then(|| 100.0 * abs / spread),
        correct_count: 0,
        instance_count: targets.len(),
    })
}

/// Predicted value is the distribution-weighted mean class ordinal;
/// correctness compares the argmax class.
pub fn evaluate_classifier<C: Classifier + ?Sized>(
    model: &C,
    test: &LabeledDataset,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::invalid("test set has no rows"));
    }
    if test.schema.hash() != model.schema().hash() {
        return Err(Error::Schema(
            "test set schema differs from the model's".into(),
        ));
    }
    let mut targets = Vec::with_capacity(test.len());
    let mut predictions = Vec::with_capacity(test.len());
    let mut correct = 0;
    for (x, y) in &test.rows {
        let d = model.distribution(x)?;
        predictions.push(d.iter().enumerate().map(|(k, p)| k as f64 * p).sum());
        targets.push(y.ordinal());
        if argmax(&d) == *y {
            correct += 1;
        }
    }
    let mut m = regression_metrics(&targets, &predictions)?;
    m.correct_count = correct;
    Ok(m)
}

impl fmt::Display for Metrics {
    /// Fixed-width table with the columns MAE, RMSE, RAE, Correct, Instances.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rae = self
            .rae_pct
            .map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}%"));
        writeln!(
            f,
            "{:>10} {:>10} {:>10} {:>8} {:>10}",
            "MAE", "RMSE", "RAE", "Correct", "Instances"
        )?;
        writeln!(
            f,
            "{:>10.4} {:>10.4} {:>10} {:>8} {:>10}",
            self.mae, self.rmse, rae, self.correct_count, self.instance_count
        )
    }
}
