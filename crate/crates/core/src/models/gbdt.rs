//! Squared-loss gradient boosting over [`super::tree`] learners.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, BinnedMatrix, Node, Tree, TreeParams};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: u32,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams { trees: 300, depth: 6, learning_rate: 0.1, min_leaf: 20, subsample: 1.0, seed: 0 }
    }
}

impl GbdtParams {
    pub fn validate(&self, rows: usize) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadParams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if rows < 2 * self.min_leaf as usize {
            return Err(ModelError::TooFewRows { rows, needed: 2 * self.min_leaf as usize });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub base: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after each stage; entry 0 is the constant model.
    pub train_loss: Vec<f64>,
}

impl Gbdt {
    pub fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        // Same summation order as the training updates.
        self.trees.iter().fold(self.base, |acc, t| acc + t.predict(columns, row))
    }
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// `F0 = mean(y)`; each stage fits a tree to the residuals and adds it with
/// shrinkage. Leaves are pre-scaled by the learning rate.
pub fn gbdt_fit(columns: &[Vec<f64>], y: &[f64], params: &GbdtParams) -> Result<Gbdt, ModelError> {
    params.validate(y.len())?;
    let x = BinnedMatrix::new(columns);
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![base; n];
    let mut train_loss = vec![mse(y, &f)];
    let mut trees = Vec::with_capacity(params.trees);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_params = TreeParams {
        max_depth: Some(params.depth),
        min_leaf: params.min_leaf,
        feature_frac: 1.0,
        scale: params.learning_rate,
    };
    let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut weights = vec![1u32; n];
    let mut residual = vec![0.0; n];
    for _ in 0..params.trees {
        if take < n {
            weights.fill(0);
            for i in sample(&mut rng, n, take).into_iter() {
                weights[i] = 1;
            }
        }
        for i in 0..n {
            residual[i] = y[i] - f[i];
        }
        let fit = fit_tree(&x, &residual, &weights, &tree_params, &mut rng);
        for i in 0..n {
            if let Node::Leaf { value } = fit.tree.nodes[fit.row_leaf[i] as usize] {
                f[i] += value;
            }
        }
        train_loss.push(mse(y, &f));
        trees.push(fit.tree);
    }
    Ok(Gbdt { base, trees, train_loss })
}
