//! Versioned JSON model documents.

use serde::{Deserialize, Serialize};

use super::{
    Classifier, DecisionTreeModel, Distribution, FeatureVector, ForestModel, NaiveBayesModel,
    Schema,
};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "edgecare-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ClassifierModel {
    Tree(DecisionTreeModel),
    Forest(ForestModel),
    Bayes(NaiveBayesModel),
}

impl ClassifierModel {
    fn inner(&self) -> &dyn Classifier {
        match self {
            ClassifierModel::Tree(m) => m,
            ClassifierModel::Forest(m) => m,
            ClassifierModel::Bayes(m) => m,
        }
    }

    pub fn algorithm(&self) -> &'static str {
        match self {
            ClassifierModel::Tree(_) => "tree",
            ClassifierModel::Forest(_) => "forest",
            ClassifierModel::Bayes(_) => "bayes",
        }
    }

    /// One line describing the trained model's size.
    pub fn summary(&self) -> String {
        match self {
            ClassifierModel::Tree(m) => format!(
                "tree: depth {}, {} nodes, {} leaves",
                m.root.depth(),
                m.root.node_count(),
                m.root.leaf_count()
            ),
            ClassifierModel::Forest(m) => {
                let depth = m.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
                let nodes: usize = m.trees.iter().map(|t| t.node_count()).sum();
                format!(
                    "forest: {} trees, {} attributes per split, max depth {depth}, {nodes} nodes, seed {}",
                    m.trees.len(),
                    m.attrs_per_split,
                    m.params.seed
                )
            }
            ClassifierModel::Bayes(m) => format!(
                "bayes: {} attributes, priors STABLE {:.4} LIGHT_WORSENING {:.4} WORSENING {:.4}",
                m.attributes.len(),
                m.priors[0],
                m.priors[1],
                m.priors[2]
            ),
        }
    }
}

impl Classifier for ClassifierModel {
    fn schema(&self) -> &Schema {
        self.inner().schema()
    }

    fn distribution(&self, x: &FeatureVector) -> Result<Distribution> {
        self.inner().distribution(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub model: ClassifierModel,
}

impl ModelDocument {
    pub fn new(model: ClassifierModel) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            schema_hash: model.schema().hash(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Rejects unknown formats and versions, and documents whose recorded
    /// hash does not match the embedded schema.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let actual = doc.model.schema().hash();
        if actual != doc.schema_hash {
            return Err(Error::Integrity(format!(
                "model schema hash {} does not match its schema ({actual})",
                doc.schema_hash
            )));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{
        train_decision_tree, AttrKind, ClassLabel, LabeledDataset, TreeParams, Value,
    };

    #[test]
    fn round_trip_and_tamper() {
        let schema = Schema::simple(&[("x", AttrKind::Numeric)]).unwrap();
        let rows = [
            (1.0, ClassLabel::Stable),
            (0.1 + 0.2, ClassLabel::Worsening),
        ]
        .iter()
        .map(|(x, c)| {
            (
                FeatureVector::new(&schema, vec![Some(Value::Num(*x))]).unwrap(),
                *c,
            )
        })
        .collect();
        let d = LabeledDataset::new(schema, rows).unwrap();
        let doc = ModelDocument::new(ClassifierModel::Tree(
            train_decision_tree(&d, &TreeParams::default()).unwrap(),
        ));
        let text = doc.to_json().unwrap();
        let back = ModelDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), text);
        let tampered = text.replace(&doc.schema_hash, &"0".repeat(64));
        assert!(matches!(
            ModelDocument::from_json(&tampered),
            Err(Error::Integrity(_))
        ));
    }
}
