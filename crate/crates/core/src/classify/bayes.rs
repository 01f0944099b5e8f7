//! Naive Bayes with Gaussian numeric attributes and Laplace-smoothed
//! categorical ones, computed in the log domain.

use serde::{Deserialize, Serialize};

use super::{
    AttrKind, Classifier, Distribution, FeatureVector, LabeledDataset, Schema, Value, N_CLASSES,
};
use crate::error::Result;

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    /// Maximum-likelihood (1/n) variance, floored.
    pub variance: f64,
}

impl Gaussian {
    pub fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - d * d / (2.0 * self.variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttrParams {
    /// `None` for a class with no known value of this attribute.
    Numeric {
        per_class: [Option<Gaussian>; N_CLASSES],
    },
    Categorical {
        /// Distinct training values, sorted.
        values: Vec<String>,
        /// `counts[class][value]`
        counts: [Vec<f64>; N_CLASSES],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub schema: Schema,
    pub priors: Distribution,
    pub attributes: Vec<AttrParams>,
}

pub fn train_naive_bayes(data: &LabeledDataset) -> Result<NaiveBayesModel> {
    data.require_rows()?;
    let mut class_n = [0.0; N_CLASSES];
    for (_, c) in &data.rows {
        class_n[c.index()] += 1.0;
    }
    let total = data.len() as f64;
    let priors = class_n.map(|n| n / total);
    let attributes = data
        .schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| match a.kind {
            AttrKind::Numeric => {
                let mut per_class = [None; N_CLASSES];
                for (k, slot) in per_class.iter_mut().enumerate() {
                    let xs: Vec<f64> = data
                        .rows
                        .iter()
                        .filter(|(_, c)| c.index() == k)
                        .filter_map(|(x, _)| match x.get(i) {
                            Some(Value::Num(v)) => Some(*v),
                            _ => None,
                        })
                        .collect();
                    if !xs.is_empty() {
                        let n = xs.len() as f64;
                        let mean = xs.iter().sum::<f64>() / n;
                        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        *slot = Some(Gaussian {
                            mean,
                            variance: var.max(VARIANCE_FLOOR),
                        });
                    }
                }
                AttrParams::Numeric { per_class }
            }
            AttrKind::Categorical => {
                let mut values: Vec<String> = data
                    .rows
                    .iter()
                    .filter_map(|(x, _)| match x.get(i) {
                        Some(Value::Cat(v)) => Some(v.clone()),
                        _ => None,
                    })
                    .collect();
                values.sort();
                values.dedup();
                let mut counts: [Vec<f64>; N_CLASSES] =
                    std::array::from_fn(|_| vec![0.0; values.len()]);
                for (x, c) in &data.rows {
                    if let Some(Value::Cat(v)) = x.get(i) {
                        let j = values.binary_search(v).expect("value collected");
                        counts[c.index()][j] += 1.0;
                    }
                }
                AttrParams::Categorical { values, counts }
            }
        })
        .collect();
    Ok(NaiveBayesModel {
        schema: data.schema.clone(),
        priors,
        attributes,
    })
}

impl NaiveBayesModel {
    /// `ln P(c) + Σ ln P(x_i | c)` per class; `None` for classes absent from
    /// training. Missing query values are skipped, as is any numeric
    /// attribute some represented class never observed.
    pub fn log_joint(&self, x: &FeatureVector) -> Result<[Option<f64>; N_CLASSES]> {
        x.conforms(&self.schema)?;
        let present: Vec<usize> = (0..N_CLASSES).filter(|&k| self.priors[k] > 0.0).collect();
        let mut out = [None; N_CLASSES];
        for &k in &present {
            out[k] = Some(self.priors[k].ln());
        }
        for (i, params) in self.attributes.iter().enumerate() {
            match (params, x.get(i)) {
                (AttrParams::Numeric { per_class }, Some(Value::Num(v))) => {
                    if present.iter().any(|&k| per_class[k].is_none()) {
                        continue;
                    }
                    for &k in &present {
                        let g = per_class[k].expect("checked above");
                        *out[k].as_mut().expect("present") += g.log_pdf(*v);
                    }
                }
                (AttrParams::Categorical { values, counts }, Some(Value::Cat(v))) => {
                    let j = values.binary_search(v).ok();
                    let distinct = values.len() as f64;
                    for &k in &present {
                        let seen: f64 = counts[k].iter().sum();
                        let hits = j.map_or(0.0, |j| counts[k][j]);
                        *out[k].as_mut().expect("present") +=
                            ((hits + 1.0) / (seen + distinct)).ln();
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Softmax over the represented classes; absent classes get 0.
pub fn normalize_log(scores: &[Option<f64>; N_CLASSES]) -> Distribution {
    let top = scores
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut d = [0.0; N_CLASSES];
    for k in 0..N_CLASSES {
        if let Some(s) = scores[k] {
            d[k] = (s - top).exp();
        }
    }
    let z: f64 = d.iter().sum();
    d.map(|v| v / z)
}

impl Classifier for NaiveBayesModel {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn distribution(&self, x: &FeatureVector) -> Result<Distribution> {
        Ok(normalize_log(&self.log_joint(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassLabel;

    fn categorical(rows: &[(&str, ClassLabel)]) -> LabeledDataset {
        let schema = Schema::simple(&[("v", AttrKind::Categorical)]).unwrap();
        let rows = rows
            .iter()
            .map(|(v, c)| {
                (
                    FeatureVector::new(&schema, vec![Some(Value::Cat(v.to_string()))]).unwrap(),
                    *c,
                )
            })
            .collect();
        LabeledDataset::new(schema, rows).unwrap()
    }

    fn query(m: &NaiveBayesModel, v: &str) -> Distribution {
        let x = FeatureVector::new(&m.schema, vec![Some(Value::Cat(v.into()))]).unwrap();
        m.distribution(&x).unwrap()
    }

    #[test]
    fn laplace_posteriors() {
        use ClassLabel::{Stable as A, Worsening as B};
        // 0.75 * 4/5 / (0.75 * 4/5 + 0.25 * 1/3)
        let m = train_naive_bayes(&categorical(&[("x", A), ("x", A), ("x", A), ("y", B)])).unwrap();
        assert!((query(&m, "x")[0] - 0.6 / (0.6 + 0.25 / 3.0)).abs() < 1e-12);
        // 0.75 * 3/5 / (0.75 * 3/5 + 0.25 * 1/3) = 0.84375
        let m = train_naive_bayes(&categorical(&[("x", A), ("x", A), ("y", A), ("y", B)])).unwrap();
        assert!((query(&m, "x")[0] - 0.84375).abs() < 1e-12);
        assert_eq!(query(&m, "x")[1], 0.0);
    }

    #[test]
    fn gaussian_floor_and_missing() {
        let schema = Schema::simple(&[("t", AttrKind::Numeric)]).unwrap();
        let row = |v: f64, c| {
            (
                FeatureVector::new(&schema, vec![Some(Value::Num(v))]).unwrap(),
                c,
            )
        };
        let d = LabeledDataset::new(
            schema.clone(),
            vec![
                row(1.0, ClassLabel::Stable),
                row(1.0, ClassLabel::Stable),
                row(5.0, ClassLabel::Worsening),
            ],
        )
        .unwrap();
        let m = train_naive_bayes(&d).unwrap();
        match &m.attributes[0] {
            AttrParams::Numeric { per_class } => {
                assert_eq!(per_class[0].unwrap().variance, VARIANCE_FLOOR)
            }
            other => panic!("{other:?}"),
        }
        let p = m.distribution(&FeatureVector::missing(&schema)).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[2] - 1.0 / 3.0).abs() < 1e-12);
    }
}
