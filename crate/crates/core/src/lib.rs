//! Stop-level bus ridership forecasting.
//!
//! The crate turns automatic passenger counter (APC) stop events plus weather,
//! stop, facility and holiday tables into a feature matrix, partitions the stop
//! network into contiguous Max-p regions, and compares a single global regressor
//! against per-region regressors under a rolling-origin protocol.
//!
//! Module map:
//!
//! * [`ingestion`] - CSV loaders, haversine distance, facility buffers, weather join
//! * [`cleaning`] - negative/capacity ride filters and the dual IQR discrepancy rule
//! * [`temporal`] - cyclic time encodings, day periods, weekend/holiday flag
//! * [`network`] - hourly snapshot graphs, centralities, edge/route/network statistics
//! * [`regionalization`] - Gabriel contiguity, Max-p heuristic, Calinski-Harabasz selection
//! * [`features`] - assembly of the full feature matrix
//! * [`models`] - OLS, gradient boosting, random forest, global and polygon frameworks
//! * [`evaluation`] - rolling splits, error metrics, paired tests, diagnostics
//! * [`attribution`] - permutation feature importance
//! * [`synth`] - synthetic city generator with planted structure
//! * [`config`] and [`pipeline`] - end-to-end orchestration

pub mod attribution;
pub mod cleaning;
pub mod config;
pub mod evaluation;
pub mod features;
pub mod ingestion;
pub mod models;
pub mod network;
pub mod pipeline;
pub mod regionalization;
pub mod stats;
pub mod synth;
pub mod temporal;
