//! Random forest of gain-ratio trees. Tree `i` draws from a ChaCha8 stream
//! selected by `(seed, i)`, so parallel and serial training agree.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_params, Grower, Node, TreeParams};
use super::{Classifier, Distribution, FeatureVector, LabeledDataset, Schema, N_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Attributes sampled at each split; `None` means the square root of the
    /// schema size, rounded up.
    pub attrs_per_split: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 25,
            attrs_per_split: None,
            seed: 0,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub schema: Schema,
    pub params: ForestParams,
    pub attrs_per_split: usize,
    pub trees: Vec<Node>,
}

fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn train_random_forest(data: &LabeledDataset, params: &ForestParams) -> Result<ForestModel> {
    data.require_rows()?;
    check_params(&params.tree)?;
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    let n_attr = data.schema.len();
    let m = params
        .attrs_per_split
        .unwrap_or_else(|| (n_attr as f64).sqrt().ceil() as usize);
    if m == 0 || m > n_attr {
        return Err(Error::invalid(format!(
            "attrs_per_split must be in 1..={n_attr}, got {m}"
        )));
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(params.seed, i);
            let n = data.len();
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut choose = |total: usize| {
                let mut picked = sample(&mut rng, total, m).into_vec();
                picked.sort_unstable();
                picked
            };
            Grower {
                data,
                params: &params.tree,
                choose: &mut choose,
            }
            .grow(rows, 0)
        })
        .collect();
    Ok(ForestModel {
        schema: data.schema.clone(),
        params: *params,
        attrs_per_split: m,
        trees,
    })
}

impl Classifier for ForestModel {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Vote shares: each tree votes for its leaf's argmax class (ties to the
    /// lowest class), so the distribution's argmax is the majority vote.
    fn distribution(&self, x: &FeatureVector) -> Result<Distribution> {
        x.conforms(&self.schema)?;
        let mut votes = [0.0; N_CLASSES];
        for t in &self.trees {
            votes[super::argmax(&t.distribution(x)).index()] += 1.0;
        }
        let n = self.trees.len() as f64;
        Ok(votes.map(|v| v / n))
    }
}
