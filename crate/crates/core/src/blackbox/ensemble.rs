//! Bagged decision-tree ensemble used as the reference black box.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BlackBoxError, Predictor};
use crate::data::{Dataset, Instance, Label};
use crate::tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub tree_count: usize,
    /// Draw an n-size bootstrap sample per tree.
    pub bootstrap: bool,
    /// Features considered per node; `None` means `ceil(sqrt(m))`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            tree_count: 100,
            bootstrap: true,
            max_features: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaggedTreeEnsemble {
    trees: Vec<DecisionTree>,
}

impl BaggedTreeEnsemble {
    /// Majority vote over prebuilt trees.
    pub fn from_trees(trees: Vec<DecisionTree>) -> Self {
        assert!(!trees.is_empty(), "an ensemble needs at least one tree");
        BaggedTreeEnsemble { trees }
    }

    /// Trains on the labeled rows of `ds`. Trees are independent given the
    /// seed, so they are grown in parallel.
    pub fn train(ds: &Dataset, params: EnsembleParams, seed: u64) -> Result<Self, BlackBoxError> {
        if params.tree_count == 0 {
            return Err(BlackBoxError::Training("tree_count must be at least 1".into()));
        }
        let (xs, ys): (Vec<Instance>, Vec<Label>) = ds
            .rows
            .iter()
            .zip(&ds.labels)
            .filter_map(|(x, y)| y.map(|y| (x.clone(), y)))
            .unzip();
        if xs.is_empty() {
            return Err(BlackBoxError::Training("no labeled rows to train on".into()));
        }
        let m = ds.schema.len();
        let max_features = params.max_features.unwrap_or_else(|| (m as f64).sqrt().ceil() as usize).max(1);
        let tree_params = TreeParams {
            min_leaf: params.min_leaf,
            max_depth: None,
            max_features: Some(max_features),
        };
        let trees = (0..params.tree_count)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let n = xs.len();
                let (bx, by): (Vec<Instance>, Vec<Label>) = if params.bootstrap {
                    (0..n)
                        .map(|_| {
                            let i = rng.gen_range(0..n);
                            (xs[i].clone(), ys[i])
                        })
                        .unzip()
                } else {
                    (xs.clone(), ys.clone())
                };
                DecisionTree::fit_with_rng(&ds.schema, &bx, &by, tree_params, &mut rng)
                    .map_err(|e| BlackBoxError::Training(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BaggedTreeEnsemble { trees })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Majority vote; a tie goes to the first target label.
    pub fn predict_one(&self, x: &Instance) -> Label {
        let ones = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        usize::from(2 * ones > self.trees.len())
    }
}

impl Predictor for BaggedTreeEnsemble {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        if xs.len() >= 256 {
            Ok(xs.par_iter().map(|x| self.predict_one(x)).collect())
        } else {
            Ok(xs.iter().map(|x| self.predict_one(x)).collect())
        }
    }
}
