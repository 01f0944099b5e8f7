//! C4.5-style decision tree: gain-ratio splits, binary thresholds at
//! midpoints for numeric attributes, one branch per value for categorical
//! ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::entropy::gain_ratio;
use super::{
    AttrKind, ClassLabel, Classifier, Distribution, FeatureVector, LabeledDataset, Schema, Value,
    N_CLASSES,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until purity. The root is depth 0.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        distribution: Distribution,
        count: usize,
    },
    Numeric {
        attribute: usize,
        threshold: f64,
        /// `x <= threshold`
        le: Box<Node>,
        gt: Box<Node>,
        /// Where missing values go: the child that saw more training rows.
        missing_le: bool,
    },
    Categorical {
        attribute: usize,
        branches: Vec<Branch>,
        /// Branch taken for missing or unseen values.
        majority: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub value: String,
    pub node: Node,
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Numeric { le, gt, .. } => 1 + le.depth().max(gt.depth()),
            Node::Categorical { branches, .. } => {
                1 + branches.iter().map(|b| b.node.depth()).max().unwrap_or(0)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Numeric { le, gt, .. } => 1 + le.node_count() + gt.node_count(),
            Node::Categorical { branches, .. } => {
                1 + branches.iter().map(|b| b.node.node_count()).sum::<usize>()
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Numeric { le, gt, .. } => le.leaf_count() + gt.leaf_count(),
            Node::Categorical { branches, .. } => {
                branches.iter().map(|b| b.node.leaf_count()).sum()
            }
        }
    }

    pub fn distribution(&self, x: &FeatureVector) -> Distribution {
        let mut node = self;
        loop {
            node = match node {
                Node::Leaf { distribution, .. } => return *distribution,
                Node::Numeric {
                    attribute,
                    threshold,
                    le,
                    gt,
                    missing_le,
                } => {
                    let go_le = match x.get(*attribute) {
                        Some(Value::Num(v)) => v <= threshold,
                        _ => *missing_le,
                    };
                    if go_le {
                        le
                    } else {
                        gt
                    }
                }
                Node::Categorical {
                    attribute,
                    branches,
                    majority,
                } => {
                    let hit = match x.get(*attribute) {
                        Some(Value::Cat(v)) => branches.iter().position(|b| &b.value == v),
                        _ => None,
                    };
                    &branches[hit.unwrap_or(*majority)].node
                }
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub schema: Schema,
    pub params: TreeParams,
    pub root: Node,
}

impl Classifier for DecisionTreeModel {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn distribution(&self, x: &FeatureVector) -> Result<Distribution> {
        x.conforms(&self.schema)?;
        Ok(self.root.distribution(x))
    }
}

pub fn train_decision_tree(
    data: &LabeledDataset,
    params: &TreeParams,
) -> Result<DecisionTreeModel> {
    data.require_rows()?;
    check_params(params)?;
    let all: Vec<usize> = (0..data.schema.len()).collect();
    let rows: Vec<usize> = (0..data.len()).collect();
    let root = Grower {
        data,
        params,
        choose: &mut |_| all.clone(),
    }
    .grow(rows, 0);
    Ok(DecisionTreeModel {
        schema: data.schema.clone(),
        params: *params,
        root,
    })
}

pub(crate) fn check_params(params: &TreeParams) -> Result<()> {
    if params.min_leaf == 0 {
        return Err(Error::invalid("min_leaf must be >= 1"));
    }
    Ok(())
}

/// Grows a tree over `rows` (indices into the dataset, repeats allowed).
/// `choose` returns the attribute indices considered at each split, in
/// ascending order.
pub(crate) struct Grower<'a> {
    pub data: &'a LabeledDataset,
    pub params: &'a TreeParams,
    pub choose: &'a mut dyn FnMut(usize) -> Vec<usize>,
}

enum Split {
    Numeric {
        attribute: usize,
        threshold: f64,
    },
    Categorical {
        attribute: usize,
        values: Vec<String>,
    },
}

fn counts(data: &LabeledDataset, rows: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; N_CLASSES];
    for &r in rows {
        c[data.rows[r].1.index()] += 1.0;
    }
    c
}

impl Grower<'_> {
    pub fn grow(&mut self, rows: Vec<usize>, depth: usize) -> Node {
        let parent = counts(self.data, &rows);
        let pure = parent.iter().filter(|&&c| c > 0.0).count() <= 1;
        let capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || capped || rows.len() < 2 * self.params.min_leaf {
            return self.leaf(&parent, rows.len());
        }
        let attributes = (self.choose)(self.data.schema.len());
        let Some(split) = self.best_split(&rows, &attributes) else {
            return self.leaf(&parent, rows.len());
        };
        match split {
            Split::Numeric {
                attribute,
                threshold,
            } => {
                let (mut le, mut gt, mut missing) = (Vec::new(), Vec::new(), Vec::new());
                for &r in &rows {
                    match self.data.rows[r].0.get(attribute) {
                        Some(Value::Num(v)) if *v <= threshold => le.push(r),
                        Some(Value::Num(_)) => gt.push(r),
                        _ => missing.push(r),
                    }
                }
                let missing_le = le.len() >= gt.len();
                if missing_le {
                    le.extend(missing)
                } else {
                    gt.extend(missing)
                }
                Node::Numeric {
                    attribute,
                    threshold,
                    le: Box::new(self.grow(le, depth + 1)),
                    gt: Box::new(self.grow(gt, depth + 1)),
                    missing_le,
                }
            }
            Split::Categorical { attribute, values } => {
                let mut parts: Vec<Vec<usize>> = vec![Vec::new(); values.len()];
                let mut missing = Vec::new();
                for &r in &rows {
                    match self.data.rows[r].0.get(attribute) {
                        Some(Value::Cat(v)) => {
                            parts[values.iter().position(|x| x == v).expect("value seen")].push(r)
                        }
                        _ => missing.push(r),
                    }
                }
                let mut majority = 0;
                for (i, p) in parts.iter().enumerate() {
                    if p.len() > parts[majority].len() {
                        majority = i;
                    }
                }
                parts[majority].extend(missing);
                let branches = values
                    .into_iter()
                    .zip(parts)
                    .map(|(value, p)| Branch {
                        value,
                        node: self.grow(p, depth + 1),
                    })
                    .collect();
                Node::Categorical {
                    attribute,
                    branches,
                    majority,
                }
            }
        }
    }

    fn leaf(&self, parent: &[f64], count: usize) -> Node {
        let total: f64 = parent.iter().sum();
        let mut distribution = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            distribution[k] = parent[k] / total;
        }
        Node::Leaf {
            distribution,
            count,
        }
    }

    /// Highest gain ratio; ties keep the lowest attribute index, then the
    /// lowest threshold. Gain is scaled by the fraction of rows whose value
    /// is known.
    fn best_split(&self, rows: &[usize], attributes: &[usize]) -> Option<Split> {
        let min_leaf = self.params.min_leaf as f64;
        let total = rows.len() as f64;
        let mut best: Option<(f64, Split)> = None;
        let mut offer = |score: f64, split: Split| {
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, split));
            }
        };
        for &a in attributes {
            match self.data.schema.attributes()[a].kind {
                AttrKind::Numeric => {
                    let mut known: Vec<(f64, ClassLabel)> = rows
                        .iter()
                        .filter_map(|&r| match self.data.rows[r].0.get(a) {
                            Some(Value::Num(v)) => Some((*v, self.data.rows[r].1)),
                            _ => None,
                        })
                        .collect();
                    if known.len() < 2 {
                        continue;
                    }
                    known.sort_by(|x, y| x.0.total_cmp(&y.0));
                    let frac = known.len() as f64 / total;
                    let mut whole = vec![0.0; N_CLASSES];
                    for (_, c) in &known {
                        whole[c.index()] += 1.0;
                    }
                    let mut left = vec![0.0; N_CLASSES];
                    for i in 0..known.len() - 1 {
                        left[known[i].1.index()] += 1.0;
                        let (lo, hi) = (known[i].0, known[i + 1].0);
                        if lo == hi {
                            continue;
                        }
                        let n_left = (i + 1) as f64;
                        if n_left < min_leaf || known.len() as f64 - n_left < min_leaf {
                            continue;
                        }
                        let right: Vec<f64> = whole.iter().zip(&left).map(|(w, l)| w - l).collect();
                        let children = vec![left.clone(), right];
                        let mut threshold = lo + (hi - lo) / 2.0;
                        if threshold >= hi {
                            threshold = lo;
                        }
                        offer(
                            frac * gain_ratio(&whole, &children),
                            Split::Numeric {
                                attribute: a,
                                threshold,
                            },
                        );
                    }
                }
                AttrKind::Categorical => {
                    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                    let mut whole = vec![0.0; N_CLASSES];
                    for &r in rows {
                        if let Some(Value::Cat(v)) = self.data.rows[r].0.get(a) {
                            let c = self.data.rows[r].1.index();
                            groups
                                .entry(v.as_str())
                                .or_insert_with(|| vec![0.0; N_CLASSES])[c] += 1.0;
                            whole[c] += 1.0;
                        }
                    }
                    if groups.len() < 2 || groups.values().any(|g| g.iter().sum::<f64>() < min_leaf)
                    {
                        continue;
                    }
                    let frac = whole.iter().sum::<f64>() / total;
                    let children: Vec<Vec<f64>> = groups.values().cloned().collect();
                    let values = groups.keys().map(|v| v.to_string()).collect();
                    offer(
                        frac * gain_ratio(&whole, &children),
                        Split::Categorical {
                            attribute: a,
                            values,
                        },
                    );
                }
            }
        }
        best.map(|(_, s)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::argmax;

    fn one_d(xs: &[(f64, ClassLabel)]) -> LabeledDataset {
        let schema = Schema::simple(&[("x", AttrKind::Numeric)]).unwrap();
        let rows = xs
            .iter()
            .map(|(x, c)| {
                (
                    FeatureVector::new(&schema, vec![Some(Value::Num(*x))]).unwrap(),
                    *c,
                )
            })
            .collect();
        LabeledDataset::new(schema, rows).unwrap()
    }

    #[test]
    fn single_class_is_a_leaf() {
        let d = one_d(&[(1.0, ClassLabel::Worsening), (2.0, ClassLabel::Worsening)]);
        let m = train_decision_tree(&d, &TreeParams::default()).unwrap();
        assert_eq!(m.root.node_count(), 1);
        let x = FeatureVector::missing(&d.schema);
        assert_eq!(argmax(&m.distribution(&x).unwrap()), ClassLabel::Worsening);
    }

    #[test]
    fn midpoint_threshold() {
        use ClassLabel::{Stable as A, Worsening as B};
        let d = one_d(&[(1.0, A), (2.0, A), (3.0, A), (7.0, B), (8.0, B), (9.0, B)]);
        let m = train_decision_tree(&d, &TreeParams::default()).unwrap();
        match &m.root {
            Node::Numeric {
                threshold, le, gt, ..
            } => {
                assert_eq!(*threshold, 5.0);
                assert!(matches!(
                    **le,
                    Node::Leaf {
                        distribution: [1.0, 0.0, 0.0],
                        ..
                    }
                ));
                assert!(matches!(
                    **gt,
                    Node::Leaf {
                        distribution: [0.0, 0.0, 1.0],
                        ..
                    }
                ));
            }
            other => panic!("{other:?}"),
        }
        let x = FeatureVector::new(&d.schema, vec![Some(Value::Num(2.0))]).unwrap();
        assert_eq!(m.predict(&x).unwrap().0, A);
    }

    #[test]
    fn depth_and_leaf_limits() {
        use ClassLabel::{Stable as A, Worsening as B};
        let d = one_d(&[(1.0, A), (2.0, B), (3.0, A), (4.0, B)]);
        let stump = train_decision_tree(
            &d,
            &TreeParams {
                max_depth: Some(0),
                min_leaf: 1,
            },
        )
        .unwrap();
        assert_eq!(stump.root.depth(), 0);
        let wide = train_decision_tree(
            &d,
            &TreeParams {
                max_depth: None,
                min_leaf: 2,
            },
        )
        .unwrap();
        assert!(wide.root.depth() <= 1);
        assert!(train_decision_tree(
            &d,
            &TreeParams {
                max_depth: None,
                min_leaf: 0
            }
        )
        .is_err());
    }

    #[test]
    fn missing_follows_the_larger_child() {
        use ClassLabel::{Stable as A, Worsening as B};
        let d = one_d(&[(1.0, A), (2.0, A), (3.0, A), (7.0, B)]);
        let m = train_decision_tree(&d, &TreeParams::default()).unwrap();
        let (c, _) = m.predict(&FeatureVector::missing(&d.schema)).unwrap();
        assert_eq!(c, A);
    }
}
