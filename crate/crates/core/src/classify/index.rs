//! Weighted stress and lifestyle index over scores in [0, 1].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedIndexModel {
    weights: BTreeMap<String, f64>,
    threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexOutcome {
    pub index: f64,
    /// `index > threshold`; raises a light alert downstream.
    pub triggered: bool,
}

impl WeightedIndexModel {
    /// Weights are rescaled to sum to 1. They must be finite, non-negative
    /// and not all zero; the threshold must lie strictly inside (0, 1).
    pub fn new(weights: BTreeMap<String, f64>, threshold: f64) -> Result<Self> {
        if weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("index weights must be finite and >= 0"));
        }
        let sum: f64 = weights.values().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("index weights must not all be zero"));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!(
                "index threshold must be in (0, 1), got {threshold}"
            )));
        }
        Ok(Self {
            weights: weights.into_iter().map(|(k, w)| (k, w / sum)).collect(),
            threshold,
        })
    }

    /// Equal weights over the 13 questionnaire attributes, threshold 0.6.
    pub fn questionnaire_default() -> Self {
        let weights = (1..=13).map(|q| (format!("q{q:02}"), 1.0)).collect();
        Self::new(weights, 0.6).expect("valid default")
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// `Σ w_i s_i / Σ_present w_i`. Attributes absent from `scores` or mapped to
/// `None` are missing; extra entries are ignored.
pub fn weighted_index(
    model: &WeightedIndexModel,
    scores: &BTreeMap<String, Option<f64>>,
) -> Result<IndexOutcome> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (name, w) in &model.weights {
        if let Some(Some(s)) = scores.get(name) {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::invalid(format!(
                    "score for `{name}` must be in [0, 1], got {s}"
                )));
            }
            num += w * s;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::no_data("every weighted attribute is missing"));
    }
    let index = (num / den).clamp(0.0, 1.0);
    Ok(IndexOutcome {
        index,
        triggered: index > model.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, Option<f64>> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Some(*v)))
            .collect()
    }

    #[test]
    fn dot_product_and_renormalisation() {
        let w = [("a", 0.5), ("b", 0.3), ("c", 0.2)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let m = WeightedIndexModel::new(w, 0.5).unwrap();
        let r = weighted_index(&m, &scores(&[("a", 1.0), ("b", 0.0), ("c", 0.5)])).unwrap();
        assert!((r.index - 0.6).abs() < 1e-12);
        assert!(r.triggered);
        // Missing c: (0.5) / (0.8)
        let r = weighted_index(&m, &scores(&[("a", 1.0), ("b", 0.0)])).unwrap();
        assert!((r.index - 0.625).abs() < 1e-12);
        assert!(weighted_index(&m, &BTreeMap::new())
            .unwrap_err()
            .is_no_data());
        assert!(weighted_index(&m, &scores(&[("a", 1.5)])).is_err());
    }

    #[test]
    fn extremes_and_validation() {
        let m = WeightedIndexModel::questionnaire_default();
        assert!((m.weights().values().sum::<f64>() - 1.0).abs() < 1e-12);
        let all = |v: f64| (1..=13).map(|q| (format!("q{q:02}"), Some(v))).collect();
        assert_eq!(
            weighted_index(&m, &all(0.0)).unwrap(),
            IndexOutcome {
                index: 0.0,
                triggered: false
            }
        );
        let one = weighted_index(&m, &all(1.0)).unwrap();
        assert!((one.index - 1.0).abs() < 1e-12 && one.triggered);
        assert!(WeightedIndexModel::new(BTreeMap::new(), 0.5).is_err());
        assert!(WeightedIndexModel::new([("a".to_string(), 1.0)].into(), 1.0).is_err());
    }
}
