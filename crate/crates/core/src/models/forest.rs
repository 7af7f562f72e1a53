//! Bagged regression trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, BinnedMatrix, Tree, TreeParams};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows each tree fully.
    pub depth: Option<usize>,
    pub min_leaf: u32,
    pub feature_frac: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 100, depth: Some(12), min_leaf: 5, feature_frac: 0.33, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        self.trees.iter().map(|t| t.predict(columns, row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Each tree gets its own RNG stream, so the forest does not depend on how
/// trees are scheduled across threads.
pub fn rf_fit(columns: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<Forest, ModelError> {
    if params.trees == 0 {
        return Err(ModelError::BadParams("forest needs at least one tree".into()));
    }
    if !(params.feature_frac > 0.0 && params.feature_frac <= 1.0) {
        return Err(ModelError::BadParams("feature_frac must be in (0, 1]".into()));
    }
    if params.min_leaf == 0 {
        return Err(ModelError::BadParams("min_leaf must be at least 1".into()));
    }
    if y.len() < 2 * params.min_leaf as usize {
        return Err(ModelError::TooFewRows { rows: y.len(), needed: 2 * params.min_leaf as usize });
    }
    let x = BinnedMatrix::new(columns);
    let n = y.len();
    let tree_params = TreeParams {
        max_depth: params.depth,
        min_leaf: params.min_leaf,
        feature_frac: params.feature_frac,
        scale: 1.0,
    };
    let trees = (0..params.trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t);
            let mut weights = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.gen_range(0..n)] += 1;
                }
            } else {
                weights.fill(1);
            }
            fit_tree(&x, y, &weights, &tree_params, &mut rng).tree
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target() {
        let cols = vec![(0..40).map(f64::from).collect::<Vec<_>>()];
        let f = rf_fit(&cols, &[2.0; 40], &ForestParams { trees: 5, ..Default::default() }).unwrap();
        assert!((0..40).all(|r| f.predict(&cols, r) == 2.0));
    }

    #[test]
    fn rejects_bad_params() {
        let cols = vec![vec![0.0; 10]];
        assert!(rf_fit(&cols, &[0.0; 10], &ForestParams { trees: 0, ..Default::default() }).is_err());
        assert!(rf_fit(&cols, &[0.0; 10], &ForestParams { feature_frac: 0.0, ..Default::default() }).is_err());
    }
}
