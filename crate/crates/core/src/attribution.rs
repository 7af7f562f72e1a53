//! Permutation feature importance.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::models::{Column, FeatureFrame, ModelError, Predictor};

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_importance: f64,
    pub std: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub baseline_mae: f64,
    /// In registry order.
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by_key(|f| f.rank);
        v
    }

    pub fn top(&self) -> Option<&FeatureImportance> {
        self.features.iter().find(|f| f.rank == 1)
    }
}

fn mae(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

fn permuted(col: &Column, order: &[usize]) -> Column {
    match col {
        Column::Numeric(v) => Column::Numeric(order.iter().map(|&i| v[i]).collect()),
        Column::Categorical(v) => Column::Categorical(order.iter().map(|&i| v[i].clone()).collect()),
    }
}

/// MAE increase when one column is shuffled, averaged over `repeats`
/// shuffles. Each (feature, repeat) pair draws from its own seeded stream, so
/// results do not depend on evaluation order. The input frame is never
/// modified; each feature is evaluated on a private copy.
pub fn permutation_importance<P: Predictor + Sync>(
    model: &P,
    frame: &FeatureFrame,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, ModelError> {
    if repeats == 0 {
        return Err(ModelError::BadParams("repeats must be at least 1".into()));
    }
    let baseline = model.predict(frame)?;
    let baseline_mae = mae(&frame.target, &baseline);
    let n = frame.rows();
    let scores: Vec<(f64, f64)> = (0..frame.names.len())
        .into_par_iter()
        .map(|f| {
            let mut work = frame.clone();
            let mut deltas = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((f as u64) << 20) | r as u64);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                work.columns[f] = permuted(&frame.columns[f], &order);
                let pred = model.predict(&work)?;
                deltas.push(mae(&frame.target, &pred) - baseline_mae);
            }
            let m = deltas.iter().sum::<f64>() / repeats as f64;
            let var = deltas.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / repeats as f64;
            Ok((m, var.sqrt()))
        })
        .collect::<Result<_, ModelError>>()?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].0.total_cmp(&scores[a].0).then(a.cmp(&b)));
    let mut rank = vec![0; scores.len()];
    for (pos, &f) in order.iter().enumerate() {
        rank[f] = pos + 1;
    }
    let features = frame
        .names
        .iter()
        .zip(&scores)
        .zip(rank)
        .map(|((name, &(m, s)), rank)| FeatureImportance { feature: name.clone(), mean_importance: m, std: s, rank })
        .collect();
    Ok(ImportanceReport { baseline_mae, features })
}

/// `importance.csv`: feature, mean_importance, std, rank, in rank order.
pub fn write_importance<W: Write>(writer: W, report: &ImportanceReport) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for f in report.ranked() {
        wtr.serialize(f)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_global, GbdtParams, ModelParams};
    use rand::Rng;

    fn fixture() -> FeatureFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let signal: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        FeatureFrame {
            names: vec!["noise".into(), "constant".into(), "copy".into()],
            columns: vec![Column::Numeric(noise), Column::Numeric(vec![1.0; n]), Column::Numeric(signal.clone())],
            target: signal,
            stop_codes: vec!["s".into(); n],
        }
    }

    #[test]
    fn target_copy_ranks_first_and_constant_is_zero() {
        let f = fixture();
        let params = ModelParams::Gbdt(GbdtParams {
            trees: 1,
            depth: 6,
            learning_rate: 1.0,
            min_leaf: 1,
            subsample: 1.0,
            seed: 0,
        });
        let m = train_global(&f, &params).unwrap();
        let rep = permutation_importance(&m, &f, 3, 11).unwrap();
        assert_eq!(rep.top().unwrap().feature, "copy");
        assert_eq!(rep.features[1].mean_importance, 0.0);
        let mut ranks: Vec<usize> = rep.features.iter().map(|x| x.rank).collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn same_seed_same_report() {
        let f = fixture();
        let params = ModelParams::Gbdt(GbdtParams {
            trees: 5,
            depth: 3,
            learning_rate: 0.3,
            min_leaf: 5,
            subsample: 1.0,
            seed: 0,
        });
        let m = train_global(&f, &params).unwrap();
        assert_eq!(permutation_importance(&m, &f, 1, 5).unwrap(), permutation_importance(&m, &f, 1, 5).unwrap());
        assert!(permutation_importance(&m, &f, 0, 5).is_err());
    }
}
