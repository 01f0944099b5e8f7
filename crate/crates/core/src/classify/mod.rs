//! Patient-state classification: the 41-attribute feature schema, C4.5
//! decision trees, random forests, naive Bayes, the weighted stress and
//! lifestyle index, and error metrics.

pub mod bayes;
pub mod entropy;
pub mod forest;
pub mod index;
pub mod metrics;
pub mod model;
pub mod tree;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use bayes::{train_naive_bayes, NaiveBayesModel};
pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use index::{weighted_index, IndexOutcome, WeightedIndexModel};
pub use metrics::{evaluate_classifier, regression_metrics, Metrics};
pub use model::{ClassifierModel, ModelDocument};
pub use tree::{train_decision_tree, DecisionTreeModel, TreeParams};

/// Ordinal patient-state classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "STABLE")]
    Stable,
    #[serde(rename = "LIGHT_WORSENING")]
    LightWorsening,
    #[serde(rename = "WORSENING")]
    Worsening,
}

pub const N_CLASSES: usize = 3;

impl ClassLabel {
    pub const ALL: [ClassLabel; N_CLASSES] = [
        ClassLabel::Stable,
        ClassLabel::LightWorsening,
        ClassLabel::Worsening,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> ClassLabel {
        Self::ALL[i]
    }

    pub fn ordinal(self) -> f64 {
        self.index() as f64
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Stable => "STABLE",
            ClassLabel::LightWorsening => "LIGHT_WORSENING",
            ClassLabel::Worsening => "WORSENING",
        }
    }

    pub fn parse(text: &str) -> Result<ClassLabel> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == text)
            .ok_or_else(|| Error::invalid(format!("unknown class `{text}`")))
    }
}

/// A class distribution indexed by `ClassLabel::index`.
pub type Distribution = [f64; N_CLASSES];

/// Highest probability; ties go to the lowest class index.
pub fn argmax(d: &Distribution) -> ClassLabel {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if d[k] > d[best] {
            best = k;
        }
    }
    ClassLabel::from_index(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrGroup {
    HealthRecording,
    FoodIntake,
    DrugIntake,
    Activity,
    Questionnaire,
    ExternalDevice,
    /// Attributes of ad-hoc schemas outside the standard layout.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub group: AttrGroup,
    pub kind: AttrKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    attributes: Vec<Attribute>,
}

const HEALTH: [&str; 11] = [
    "sdnn_ms",
    "sdann_ms",
    "sdnnidx_ms",
    "pnn50_pct",
    "rmssd_ms",
    "lf_power_ms2",
    "hf_power_ms2",
    "respiration_rate_bpm",
    "tidal_volume_l",
    "vital_capacity_l",
    "mean_hr_bpm",
];

const FOOD: [(&str, AttrKind); 12] = [
    ("energy_kcal", AttrKind::Numeric),
    ("protein_g", AttrKind::Numeric),
    ("carbohydrate_g", AttrKind::Numeric),
    ("fat_g", AttrKind::Numeric),
    ("fibre_g", AttrKind::Numeric),
    ("sodium_mg", AttrKind::Numeric),
    ("potassium_mg", AttrKind::Numeric),
    ("phosphorus_mg", AttrKind::Numeric),
    ("fluid_ml", AttrKind::Numeric),
    ("meal_count", AttrKind::Numeric),
    ("alcohol", AttrKind::Categorical),
    ("diet_adherence", AttrKind::Categorical),
];

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Schema> {
        let mut seen = std::collections::HashSet::new();
        for a in &attributes {
            if a.name.is_empty() || a.name == "class" || !seen.insert(a.name.as_str()) {
                return Err(Error::invalid(format!(
                    "bad or repeated attribute name `{}`",
                    a.name
                )));
            }
        }
        if attributes.is_empty() {
            return Err(Error::invalid("schema needs at least one attribute"));
        }
        Ok(Schema { attributes })
    }

    /// A schema of the given attributes, all in the `Other` group.
    pub fn simple(attributes: &[(&str, AttrKind)]) -> Result<Schema> {
        Schema::new(
            attributes
                .iter()
                .map(|(n, k)| Attribute {
                    name: n.to_string(),
                    group: AttrGroup::Other,
                    kind: *k,
                })
                .collect(),
        )
    }

    /// The standard 41-attribute patient snapshot: 11 recording features, 12
    /// food-intake, 1 drug-intake, 2 activity, 13 questionnaire and 2
    /// external-device attributes.
    pub fn chronic() -> &'static Schema {
        static SCHEMA: OnceLock<Schema> = OnceLock::new();
        SCHEMA.get_or_init(|| {
            let mut a = Vec::with_capacity(41);
            let mut push = |name: String, group, kind| a.push(Attribute { name, group, kind });
            for n in HEALTH {
                push(n.into(), AttrGroup::HealthRecording, AttrKind::Numeric);
            }
            for (n, k) in FOOD {
                push(n.into(), AttrGroup::FoodIntake, k);
            }
            push(
                "drug_adherence".into(),
                AttrGroup::DrugIntake,
                AttrKind::Categorical,
            );
            push("steps".into(), AttrGroup::Activity, AttrKind::Numeric);
            push(
                "active_minutes".into(),
                AttrGroup::Activity,
                AttrKind::Numeric,
            );
            for q in 1..=13 {
                push(
                    format!("q{q:02}"),
                    AttrGroup::Questionnaire,
                    AttrKind::Categorical,
                );
            }
            push(
                "body_weight_kg".into(),
                AttrGroup::ExternalDevice,
                AttrKind::Numeric,
            );
            push(
                "glucose_mg_dl".into(),
                AttrGroup::ExternalDevice,
                AttrKind::Numeric,
            );
            Schema::new(a).expect("standard schema is valid")
        })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Hex SHA-256 of the attribute list and class labels; models record it
    /// so a model is never applied to data laid out differently.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.attributes {
            let kind = match a.kind {
                AttrKind::Numeric => "numeric",
                AttrKind::Categorical => "categorical",
            };
            h.update(format!("{}:{kind}\n", a.name));
        }
        for c in ClassLabel::ALL {
            h.update(format!("class:{}\n", c.as_str()));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

/// One patient snapshot. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<Option<Value>>,
}

impl FeatureVector {
    /// Checks arity and that each value matches its attribute's kind.
    pub fn new(schema: &Schema, values: Vec<Option<Value>>) -> Result<FeatureVector> {
        let fv = FeatureVector { values };
        fv.conforms(schema)?;
        Ok(fv)
    }

    pub fn missing(schema: &Schema) -> FeatureVector {
        FeatureVector {
            values: vec![None; schema.len()],
        }
    }

    pub fn from_pairs<'a>(
        schema: &Schema,
        pairs: impl IntoIterator<Item = (&'a str, Value)>,
    ) -> Result<FeatureVector> {
        let mut fv = FeatureVector::missing(schema);
        for (name, v) in pairs {
            fv.set(schema, name, Some(v))?;
        }
        Ok(fv)
    }

    pub fn set(&mut self, schema: &Schema, name: &str, value: Option<Value>) -> Result<()> {
        let i = schema
            .position(name)
            .ok_or_else(|| Error::invalid(format!("no attribute `{name}` in schema")))?;
        check_value(&schema.attributes[i], value.as_ref())?;
        self.values[i] = value;
        Ok(())
    }

    pub fn values(&self) -> &[Option<Value>] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Option<&Value> {
        self.values.get(i).and_then(Option::as_ref)
    }

    pub fn conforms(&self, schema: &Schema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::invalid(format!(
                "feature vector has {} values, schema has {}",
                self.values.len(),
                schema.len()
            )));
        }
        for (a, v) in schema.attributes.iter().zip(&self.values) {
            check_value(a, v.as_ref())?;
        }
        Ok(())
    }

    /// Name to value for every present attribute, in schema order.
    pub fn named<'s>(&self, schema: &'s Schema) -> BTreeMap<&'s str, &Value> {
        schema
            .names()
            .zip(&self.values)
            .filter_map(|(n, v)| v.as_ref().map(|v| (n, v)))
            .collect()
    }
}

fn check_value(a: &Attribute, v: Option<&Value>) -> Result<()> {
    match (a.kind, v) {
        (_, None) | (AttrKind::Categorical, Some(Value::Cat(_))) => Ok(()),
        (AttrKind::Numeric, Some(Value::Num(x))) if x.is_finite() => Ok(()),
        _ => Err(Error::invalid(format!(
            "value {v:?} does not fit {:?} attribute `{}`",
            a.kind, a.name
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub schema: Schema,
    pub rows: Vec<(FeatureVector, ClassLabel)>,
}

impl LabeledDataset {
    pub fn new(schema: Schema, rows: Vec<(FeatureVector, ClassLabel)>) -> Result<LabeledDataset> {
        for (x, _) in &rows {
            x.conforms(&schema)?;
        }
        Ok(LabeledDataset { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub(crate) fn require_rows(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::invalid("dataset has no rows"));
        }
        Ok(())
    }

    /// Reads CSV whose header is exactly the schema's attribute names then
    /// `class`. Empty cells and `?` are missing values.
    pub fn read_csv<R: Read>(schema: &Schema, reader: R) -> Result<LabeledDataset> {
        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = csv.headers()?.clone();
        let expected: Vec<&str> = schema.names().chain(["class"]).collect();
        for (i, want) in expected.iter().enumerate() {
            match header.get(i) {
                Some(got) if got == *want => {}
                Some(got) => {
                    return Err(Error::Schema(format!(
                        "column {} is `{got}`, expected `{want}`",
                        i + 1
                    )));
                }
                None => {
                    return Err(Error::Schema(format!(
                        "column {} `{want}` is missing",
                        i + 1
                    )))
                }
            }
        }
        if let Some(extra) = header.get(expected.len()) {
            return Err(Error::Schema(format!(
                "unexpected column {} `{extra}`",
                expected.len() + 1
            )));
        }
        let mut rows = Vec::new();
        for (r, record) in csv.records().enumerate() {
            let record = record?;
            let line = r + 2;
            let mut values = Vec::with_capacity(schema.len());
            for (i, a) in schema.attributes.iter().enumerate() {
                let cell = record.get(i).unwrap_or("");
                values.push(match (cell, a.kind) {
                    ("" | "?", _) => None,
                    (text, AttrKind::Categorical) => Some(Value::Cat(text.to_string())),
                    (text, AttrKind::Numeric) => match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => Some(Value::Num(v)),
                        _ => {
                            return Err(Error::Schema(format!(
                                "line {line}: column `{}` expects a number, got `{text}`",
                                a.name
                            )))
                        }
                    },
                });
            }
            let class = ClassLabel::parse(record.get(schema.len()).unwrap_or(""))
                .map_err(|e| Error::Schema(format!("line {line}: column `class`: {e}")))?;
            rows.push((FeatureVector { values }, class));
        }
        Ok(LabeledDataset {
            schema: schema.clone(),
            rows,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(self.schema.names().chain(["class"]))?;
        for (x, c) in &self.rows {
            let mut cells: Vec<String> = x
                .values
                .iter()
                .map(|v| match v {
                    None => String::new(),
                    Some(Value::Num(n)) => n.to_string(),
                    Some(Value::Cat(s)) => s.clone(),
                })
                .collect();
            cells.push(c.as_str().to_string());
            csv.write_record(&cells)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Anything that maps a feature vector to a class distribution.
pub trait Classifier {
    fn schema(&self) -> &Schema;

    fn distribution(&self, x: &FeatureVector) -> Result<Distribution>;

    fn predict(&self, x: &FeatureVector) -> Result<(ClassLabel, Distribution)> {
        let d = self.distribution(x)?;
        Ok((argmax(&d), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schema_layout() {
        let s = Schema::chronic();
        assert_eq!(s.len(), 41);
        let count = |g| s.attributes().iter().filter(|a| a.group == g).count();
        assert_eq!(count(AttrGroup::HealthRecording), 11);
        assert_eq!(count(AttrGroup::FoodIntake), 12);
        assert_eq!(count(AttrGroup::DrugIntake), 1);
        assert_eq!(count(AttrGroup::Activity), 2);
        assert_eq!(count(AttrGroup::Questionnaire), 13);
        assert_eq!(count(AttrGroup::ExternalDevice), 2);
        assert_eq!(s.hash().len(), 64);
        assert_ne!(
            s.hash(),
            Schema::simple(&[("x", AttrKind::Numeric)]).unwrap().hash()
        );
    }

    #[test]
    fn csv_round_trip_and_mismatch() {
        let s = Schema::simple(&[("x", AttrKind::Numeric), ("c", AttrKind::Categorical)]).unwrap();
        let text = "x,c,class\n1.5,a,STABLE\n?,,WORSENING\n";
        let d = LabeledDataset::read_csv(&s, text.as_bytes()).unwrap();
        assert_eq!(d.rows[1].0.values(), &[None, None]);
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(LabeledDataset::read_csv(&s, out.as_slice()).unwrap(), d);
        let e = LabeledDataset::read_csv(&s, "x,k,class\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("`k`"), "{e}");
        let e = LabeledDataset::read_csv(&s, "x,c,class\nabc,a,STABLE\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("`x`"), "{e}");
    }

    #[test]
    fn values_must_fit_kinds() {
        let s = Schema::simple(&[("x", AttrKind::Numeric)]).unwrap();
        assert!(FeatureVector::new(&s, vec![Some(Value::Cat("a".into()))]).is_err());
        assert!(FeatureVector::new(&s, vec![Some(Value::Num(f64::NAN))]).is_err());
        assert!(FeatureVector::new(&s, vec![]).is_err());
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), ClassLabel::Stable);
    }
}
