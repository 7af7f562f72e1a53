//! Regressors and the global / per-region training frameworks.
//!
//! Models train on a [`FeatureFrame`]: named numeric and categorical columns
//! plus the target. Fitting learns a dictionary for every categorical column
//! (codes follow sorted order; unseen values become -1) and a training-mean
//! vector that replaces missing numeric values. Both travel with the model so
//! prediction reproduces the training-time encoding exactly.

pub mod forest;
pub mod gbdt;
pub mod ols;
pub mod tree;

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{rf_fit, Forest, ForestParams};
pub use gbdt::{gbdt_fit, Gbdt, GbdtParams};
pub use ols::{ols_fit, Ols};

/// Version written into serialized models; loading rejects any other value.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Code given to categorical values not seen at fit time.
pub const UNSEEN_CODE: f64 = -1.0;

/// Regions with fewer training rows than this use the global model.
pub const DEFAULT_MIN_REGION_ROWS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty training matrix")]
    Empty,
    #[error("design matrix is singular")]
    Singular,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("{rows} rows is too few; need at least {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("feature registry mismatch: model expects {expected:?}, matrix has {found:?}")]
    RegistryMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("stop {0} is not assigned to any region")]
    UnassignedStop(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model serialization: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

/// Feature table with a named-column registry, the target, and the stop
/// code of every row (used for routing rows to regions, not as a feature).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub target: Vec<f64>,
    pub stop_codes: Vec<String>,
}

impl FeatureFrame {
    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    /// The frame without the named columns; rows and target are untouched.
    pub fn without(&self, drop: &[&str]) -> FeatureFrame {
        let (names, columns) = self
            .names
            .iter()
            .zip(&self.columns)
            .filter(|(n, _)| !drop.contains(&n.as_str()))
            .map(|(n, c)| (n.clone(), c.clone()))
            .unzip();
        FeatureFrame { names, columns, target: self.target.clone(), stop_codes: self.stop_codes.clone() }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureFrame {
        FeatureFrame {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            stop_codes: rows.iter().map(|&r| self.stop_codes[r].clone()).collect(),
        }
    }

    /// Numeric view with every categorical column coded by `dictionaries`.
    fn encode(&self, dictionaries: &[Option<Vec<String>>]) -> Vec<Vec<f64>> {
        self.columns
            .par_iter()
            .zip(dictionaries)
            .map(|(col, dict)| match (col, dict) {
                (Column::Numeric(v), _) => v.clone(),
                (Column::Categorical(v), Some(d)) => {
                    let index: HashMap<&str, f64> = d.iter().enumerate().map(|(i, s)| (s.as_str(), i as f64)).collect();
                    v.iter().map(|s| index.get(s.as_str()).copied().unwrap_or(UNSEEN_CODE)).collect()
                }
                (Column::Categorical(v), None) => vec![UNSEEN_CODE; v.len()],
            })
            .collect()
    }

    fn learn_dictionaries(&self) -> Vec<Option<Vec<String>>> {
        self.columns
            .iter()
            .map(|c| match c {
                Column::Numeric(_) => None,
                Column::Categorical(v) => {
                    let mut d: Vec<String> = v.clone();
                    d.sort();
                    d.dedup();
                    Some(d)
                }
            })
            .collect()
    }
}

fn column_means(columns: &[Vec<f64>]) -> Vec<f64> {
    columns
        .iter()
        .map(|c| {
            let (s, n) = c.iter().filter(|v| !v.is_nan()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        })
        .collect()
}

fn impute(columns: &mut [Vec<f64>], means: &[f64]) {
    for (c, &m) in columns.iter_mut().zip(means) {
        for v in c.iter_mut() {
            if v.is_nan() {
                *v = m;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Gbdt,
    RandomForest,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Gbdt => "gbdt",
            ModelKind::RandomForest => "random_forest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Ols,
    Gbdt(GbdtParams),
    RandomForest(ForestParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Ols => ModelKind::Ols,
            ModelParams::Gbdt(_) => ModelKind::Gbdt,
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    Ols(Ols),
    Gbdt(Gbdt),
    RandomForest(Forest),
}

impl Fitted {
    fn predict(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        match self {
            Fitted::Ols(m) => m.predict(columns, row),
            Fitted::Gbdt(m) => m.predict(columns, row),
            Fitted::RandomForest(m) => m.predict(columns, row),
        }
    }
}

/// Anything that maps a feature frame to one prediction per row.
pub trait Predictor {
    fn predict(&self, frame: &FeatureFrame) -> Result<Vec<f64>, ModelError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub registry: Vec<String>,
    pub dictionaries: Vec<Option<Vec<String>>>,
    pub impute: Vec<f64>,
    pub fitted: Fitted,
}

impl TrainedModel {
    pub fn fit(frame: &FeatureFrame, params: &ModelParams) -> Result<Self, ModelError> {
        if frame.rows() == 0 {
            return Err(ModelError::Empty);
        }
        let dictionaries = frame.learn_dictionaries();
        let mut x = frame.encode(&dictionaries);
        let means = column_means(&x);
        impute(&mut x, &means);
        let y = &frame.target;
        let fitted = match params {
            ModelParams::Ols => Fitted::Ols(ols_fit(&x, y)?),
            ModelParams::Gbdt(p) => Fitted::Gbdt(gbdt_fit(&x, y, p)?),
            ModelParams::RandomForest(p) => Fitted::RandomForest(rf_fit(&x, y, p)?),
        };
        Ok(TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: params.kind(),
            registry: frame.names.clone(),
            dictionaries,
            impute: means,
            fitted,
        })
    }

    fn check_registry(&self, frame: &FeatureFrame) -> Result<(), ModelError> {
        if frame.names != self.registry {
            return Err(ModelError::RegistryMismatch { expected: self.registry.clone(), found: frame.names.clone() });
        }
        Ok(())
    }

    pub fn save_json<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        serde_json::to_writer(writer, self).map_err(|e| ModelError::Serialization(e.to_string()))
    }

    pub fn load_json<R: Read>(reader: R) -> Result<Self, ModelError> {
        let m: TrainedModel = serde_json::from_reader(reader).map_err(|e| ModelError::Serialization(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(m.format_version));
        }
        Ok(m)
    }
}

impl Predictor for TrainedModel {
    fn predict(&self, frame: &FeatureFrame) -> Result<Vec<f64>, ModelError> {
        self.check_registry(frame)?;
        let mut x = frame.encode(&self.dictionaries);
        impute(&mut x, &self.impute);
        Ok((0..frame.rows()).into_par_iter().map(|r| self.fitted.predict(&x, r)).collect())
    }
}

/// One model over all rows.
pub fn train_global(frame: &FeatureFrame, params: &ModelParams) -> Result<TrainedModel, ModelError> {
    TrainedModel::fit(frame, params)
}

/// Per-region models with a global fallback for small regions and for stops
/// outside the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonEnsemble {
    pub region_of: BTreeMap<String, usize>,
    pub models: Vec<Option<TrainedModel>>,
    pub fallback: TrainedModel,
}

impl PolygonEnsemble {
    pub fn save_json<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        serde_json::to_writer(writer, self).map_err(|e| ModelError::Serialization(e.to_string()))
    }

    pub fn load_json<R: Read>(reader: R) -> Result<Self, ModelError> {
        let m: PolygonEnsemble =
            serde_json::from_reader(reader).map_err(|e| ModelError::Serialization(e.to_string()))?;
        for v in std::iter::once(&m.fallback).chain(m.models.iter().flatten()) {
            if v.format_version != MODEL_FORMAT_VERSION {
                return Err(ModelError::UnsupportedVersion(v.format_version));
            }
        }
        Ok(m)
    }

    /// Regions that use the fallback because they had too few rows.
    pub fn fallback_regions(&self) -> Vec<usize> {
        (0..self.models.len()).filter(|&r| self.models[r].is_none()).collect()
    }
}

pub fn train_polygonwise(
    frame: &FeatureFrame,
    region_of: &BTreeMap<String, usize>,
    params: &ModelParams,
    min_rows: usize,
) -> Result<PolygonEnsemble, ModelError> {
    let fallback = train_global(frame, params)?;
    train_polygonwise_with_fallback(frame, region_of, params, min_rows, fallback)
}

/// As [`train_polygonwise`] but reusing an already trained global model as
/// the fallback.
pub fn train_polygonwise_with_fallback(
    frame: &FeatureFrame,
    region_of: &BTreeMap<String, usize>,
    params: &ModelParams,
    min_rows: usize,
    fallback: TrainedModel,
) -> Result<PolygonEnsemble, ModelError> {
    let p = region_of.values().max().map_or(0, |m| m + 1);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (i, s) in frame.stop_codes.iter().enumerate() {
        let r = *region_of.get(s).ok_or_else(|| ModelError::UnassignedStop(s.clone()))?;
        rows[r].push(i);
    }
    let models = rows
        .par_iter()
        .enumerate()
        .map(|(r, idx)| {
            if idx.len() < min_rows {
                info!("region {r} has {} training rows (< {min_rows}); using the global model", idx.len());
                return Ok(None);
            }
            if idx.len() == frame.rows() {
                // Every row is in this region: the region model is the global model.
                return Ok(Some(fallback.clone()));
            }
            train_global(&frame.select_rows(idx), params).map(Some)
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(PolygonEnsemble { region_of: region_of.clone(), models, fallback })
}

impl Predictor for PolygonEnsemble {
    fn predict(&self, frame: &FeatureFrame) -> Result<Vec<f64>, ModelError> {
        self.fallback.check_registry(frame)?;
        let p = self.models.len();
        // Slot p collects rows handled by the fallback model.
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); p + 1];
        for (i, s) in frame.stop_codes.iter().enumerate() {
            match self.region_of.get(s) {
                Some(&r) if self.models[r].is_some() => groups[r].push(i),
                _ => groups[p].push(i),
            }
        }
        let mut out = vec![0.0; frame.rows()];
        for (g, idx) in groups.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let model = if g < p { self.models[g].as_ref().unwrap() } else { &self.fallback };
            let pred = if idx.len() == frame.rows() {
                model.predict(frame)?
            } else {
                model.predict(&frame.select_rows(idx))?
            };
            for (&i, v) in idx.iter().zip(pred) {
                out[i] = v;
            }
        }
        Ok(out)
    }
}
