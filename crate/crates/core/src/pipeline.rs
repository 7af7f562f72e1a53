//! End-to-end orchestration: ingest → clean → features → regionalize → train
//! → evaluate → paired tests → attribution, writing every artifact as CSV
//! plus a manifest.
//!
//! Stages run in order; parallelism lives inside the modules. Everything is a
//! function of the configuration and input files, so two runs with the same
//! config produce byte-identical output directories. Nothing is cached between
//! runs: previous outputs in the target directory are removed first.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::attribution::{permutation_importance, write_importance, ImportanceReport};
use crate::cleaning::{
    dual_criterion_filter, dual_iqr_report, iqr_thresholds, plausibility_filters, ride_discrepancies, DropReason,
    DroppedRide, IqrThresholds, RideDiscrepancy,
};
use crate::config::{Regime, RunConfig};
use crate::evaluation::{
    bucketed_metrics, compare_frameworks, diagnostics, error_demand_regression, hourly_metrics, metrics, months_of,
    rolling_splits, MetricSet, PairedTestResult, SplitPlan,
};
use crate::features::{
    build_features, event_hours, stop_info, weekday_consistent, FeatureContext, StopInfo, ID_COLUMNS,
};
use crate::ingestion::{
    join_weather, load_apc, load_facilities, load_holidays, load_stops, load_weather, ApcStopEvent, Facility,
    HolidayCalendar, IngestError, StopRecord, WeatherObservation,
};
use crate::models::{
    train_global, train_polygonwise_with_fallback, FeatureFrame, ModelError, Predictor, MODEL_FORMAT_VERSION,
};
use crate::network::{Coords, GraphContext};
use crate::regionalization::{gabriel_graph, select_partition, stop_loads, write_partition, Selection};
use crate::stats::{mean, population_std};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Clean,
    Features,
    Regionalize,
    Train,
    Evaluate,
    Tests,
    Attribution,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Clean => "clean",
            Stage::Features => "features",
            Stage::Regionalize => "regionalize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Tests => "tests",
            Stage::Attribution => "attribution",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Stage,
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: FailureKind, message: impl fmt::Display) -> Self {
        PipelineError { stage, kind, message: message.to_string() }
    }

    fn failed(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, FailureKind::Stage, message)
    }

    fn data(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, FailureKind::Data, message)
    }

    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::failed(Stage::Report, format!("{}: {e}", path.display()))
    }

    /// 2 configuration error, 3 data error, 4 any other stage failure.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Stage => 4,
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::data(Stage::Ingest, e)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub apc: Vec<ApcStopEvent>,
    pub weather: Vec<WeatherObservation>,
    pub stops: Vec<StopRecord>,
    pub facilities: Vec<Facility>,
    pub holidays: HolidayCalendar,
}

/// Loads and cross-validates the five input tables.
pub fn ingest(cfg: &RunConfig) -> Result<Dataset, PipelineError> {
    let data = Dataset {
        apc: load_apc(&cfg.apc)?,
        weather: load_weather(&cfg.weather)?,
        stops: load_stops(&cfg.stops)?,
        facilities: load_facilities(&cfg.facilities)?,
        holidays: load_holidays(&cfg.holidays)?,
    };
    let known: HashSet<&str> = data.stops.iter().map(|s| s.stop_code.as_str()).collect();
    if let Some(e) = data.apc.iter().find(|e| !known.contains(e.stop_code.as_str())) {
        return Err(PipelineError::data(
            Stage::Ingest,
            format!(
                "{}: stop {} (trip {}) is missing from {}",
                cfg.apc.display(),
                e.stop_code,
                e.trip_key,
                cfg.stops.display()
            ),
        ));
    }
    if let Some(e) = data.apc.iter().find(|e| !weekday_consistent(e)) {
        return Err(PipelineError::data(
            Stage::Ingest,
            format!(
                "{}: trip {} records weekday {} for {}",
                cfg.apc.display(),
                e.trip_key,
                e.weekday,
                e.departure_time
            ),
        ));
    }
    if data.apc.is_empty() {
        return Err(PipelineError::data(Stage::Ingest, format!("{}: no stop events", cfg.apc.display())));
    }
    info!(
        "ingested {} events, {} weather rows, {} stops, {} facilities, {} holidays",
        data.apc.len(),
        data.weather.len(),
        data.stops.len(),
        data.facilities.len(),
        data.holidays.dates.len()
    );
    Ok(data)
}

/// Dataset plus the static per-stop lookups every split shares.
pub struct Inputs {
    pub data: Dataset,
    pub info: HashMap<String, StopInfo>,
    pub coords: Coords,
}

impl Inputs {
    pub fn new(data: Dataset, radius_m: f64) -> Self {
        let info = stop_info(&data.stops, &data.facilities, radius_m);
        let coords = data.stops.iter().map(|s| (s.stop_code.clone(), (s.lat, s.lon))).collect();
        Inputs { data, info, coords }
    }
}

/// One line of `cleaning.csv`. `split` is `all` for the threshold-free
/// filters and the split id for the dual IQR rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CleaningRow {
    pub split: String,
    pub trip_key: String,
    pub reason: DropReason,
    pub tb: i64,
    pub ta: i64,
    pub pct_diff: f64,
    pub abs_diff: i64,
}

impl CleaningRow {
    fn new(split: &str, d: DroppedRide) -> Self {
        CleaningRow {
            split: split.into(),
            trip_key: d.trip_key,
            reason: d.reason,
            tb: d.tb,
            ta: d.ta,
            pct_diff: d.pct_diff,
            abs_diff: d.abs_diff,
        }
    }
}

/// Events of one split after the dual IQR rule, with thresholds estimated on
/// the training rides only and applied unchanged to the test window.
pub struct SplitData {
    pub plan: SplitPlan,
    pub train: Vec<ApcStopEvent>,
    pub test: Vec<ApcStopEvent>,
    pub thresholds: IqrThresholds,
    pub dropped: Vec<RideDiscrepancy>,
}

pub fn split_data(events: &[ApcStopEvent], plan: &SplitPlan) -> Result<SplitData, PipelineError> {
    let train: Vec<ApcStopEvent> = events.iter().filter(|e| plan.in_train(e.departure_time.date())).cloned().collect();
    let test: Vec<ApcStopEvent> = events.iter().filter(|e| plan.in_test(e.departure_time.date())).cloned().collect();
    let thresholds = iqr_thresholds(&ride_discrepancies(&train))
        .map_err(|e| PipelineError::data(Stage::Clean, format!("split {}: {e}", plan.id())))?;
    let (train, mut dropped) = dual_criterion_filter(&train, &thresholds);
    let (test, dropped_test) = dual_criterion_filter(&test, &thresholds);
    dropped.extend(dropped_test);
    Ok(SplitData { plan: *plan, train, test, thresholds, dropped })
}

/// Plans whose train and test windows both contain events.
pub fn plan_splits(cfg: &RunConfig, events: &[ApcStopEvent]) -> Result<Vec<SplitPlan>, PipelineError> {
    let dates: Vec<NaiveDate> = events.iter().map(|e| e.departure_time.date()).collect();
    let plans = rolling_splits(&months_of(dates.iter().copied()), cfg.h1, cfg.h2)
        .map_err(|e| PipelineError::data(Stage::Evaluate, e))?;
    let present: HashSet<NaiveDate> = dates.into_iter().collect();
    let usable: Vec<SplitPlan> = plans
        .into_iter()
        .filter(|p| {
            let ok = present.iter().any(|d| p.in_train(*d)) && present.iter().any(|d| p.in_test(*d));
            if !ok {
                warn!("skipping split {}: no events in its train or test window", p.id());
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(PipelineError::data(Stage::Evaluate, "no split has events in both its train and test windows"));
    }
    Ok(usable)
}

pub struct SplitFrames {
    pub train: FeatureFrame,
    pub test: FeatureFrame,
    pub test_hours: Vec<u8>,
}

/// Features for both windows; graph features come from the training window.
pub fn split_frames(cfg: &RunConfig, inputs: &Inputs, train: &[ApcStopEvent], test: &[ApcStopEvent]) -> SplitFrames {
    let graph = GraphContext::build(train, &inputs.coords);
    let ctx = FeatureContext {
        stops: &inputs.info,
        holidays: &inputs.data.holidays,
        rest_days: &cfg.rest_days,
        graph: &graph,
    };
    let tol = Duration::minutes(cfg.weather_tolerance_min);
    let frame =
        |events: &[ApcStopEvent]| build_features(events, &join_weather(events, &inputs.data.weather, tol), &ctx);
    SplitFrames { train: frame(train), test: frame(test), test_hours: event_hours(test) }
}

pub struct Regions {
    /// Stop codes in partition order (sorted).
    pub stops: Vec<String>,
    pub selection: Selection,
}

impl Regions {
    pub fn region_map(&self) -> BTreeMap<String, usize> {
        self.stops.iter().cloned().zip(self.selection.partition.region_of.iter().copied()).collect()
    }
}

/// Max-p over the stops seen in `train`, weighted by their mean load.
pub fn regionalize(cfg: &RunConfig, coords: &Coords, train: &[ApcStopEvent]) -> Result<Regions, PipelineError> {
    let loads = stop_loads(train);
    let stops: Vec<String> = loads.keys().cloned().collect();
    let points: Vec<(f64, f64)> = stops.iter().map(|s| coords[s]).collect();
    let values: Vec<f64> = loads.values().copied().collect();
    let graph = gabriel_graph(&points).map_err(|e| PipelineError::failed(Stage::Regionalize, e))?;
    let selection = select_partition(&graph, &values, &cfg.k_grid, cfg.seed)
        .map_err(|e| PipelineError::failed(Stage::Regionalize, e))?;
    Ok(Regions { stops, selection })
}

pub fn regime_frame(frame: &FeatureFrame, regime: Regime) -> FeatureFrame {
    match regime {
        Regime::WithoutId => frame.without(&ID_COLUMNS),
        _ => frame.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub split: String,
    pub regime: &'static str,
    pub framework: &'static str,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub pct_rmse: Option<f64>,
    pub smape: f64,
}

impl MetricRow {
    fn new(split: &str, regime: Regime, framework: &'static str, m: MetricSet) -> Self {
        MetricRow {
            split: split.into(),
            regime: regime.name(),
            framework,
            n: m.n,
            mae: m.mae,
            rmse: m.rmse,
            mape: m.mape,
            pct_rmse: m.pct_rmse,
            smape: m.smape,
        }
    }
}

#[derive(Serialize)]
struct StratumRow<'a, K: Serialize> {
    split: &'a str,
    regime: &'static str,
    framework: &'static str,
    stratum: K,
    n: Option<usize>,
    mae: Option<f64>,
    rmse: Option<f64>,
    smape: Option<f64>,
}

/// Mean (`split_mean`) and population standard deviation (`split_std`) of
/// each stratum's per-split metrics. `n` is the pooled row count on the mean
/// row and the number of contributing splits on the std row.
fn split_moments<'a, K: Serialize + Ord + Copy>(rows: &[StratumRow<'a, K>]) -> Vec<StratumRow<'a, K>> {
    let mut groups: BTreeMap<(&str, &str, K), Vec<&StratumRow<K>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mae.is_some()) {
        groups.entry((r.regime, r.framework, r.stratum)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((regime, framework, stratum), g) in groups {
        let pick = |f: fn(&StratumRow<K>) -> Option<f64>| g.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
        let (mae, rmse, smape) = (pick(|r| r.mae), pick(|r| r.rmse), pick(|r| r.smape));
        let row = |split, n, f: fn(&[f64]) -> Option<f64>| StratumRow {
            split,
            regime,
            framework,
            stratum,
            n: Some(n),
            mae: f(&mae),
            rmse: f(&rmse),
            smape: f(&smape),
        };
        out.push(row("split_mean", g.iter().filter_map(|r| r.n).sum(), mean));
        out.push(row("split_std", g.len(), population_std));
    }
    out
}

impl<'a, K: Serialize> StratumRow<'a, K> {
    fn new(split: &'a str, regime: Regime, framework: &'static str, stratum: K, m: Option<MetricSet>) -> Self {
        StratumRow {
            split,
            regime: regime.name(),
            framework,
            stratum,
            n: m.map(|m| m.n),
            mae: m.map(|m| m.mae),
            rmse: m.map(|m| m.rmse),
            smape: m.map(|m| m.smape),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub split: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub k: i64,
    pub regions: usize,
    #[serde(skip)]
    pub region_of: BTreeMap<String, usize>,
}

/// In-memory summary of a run; the same information is on disk.
#[derive(Debug)]
pub struct RunReport {
    pub cleaning: Vec<CleaningRow>,
    pub splits: Vec<SplitSummary>,
    pub metrics: Vec<MetricRow>,
    pub paired: Vec<(Regime, PairedTestResult)>,
    pub importance: Vec<(Regime, ImportanceReport)>,
    pub manifest: String,
}

/// Every file or directory a run may create, cleared before a new run.
const OUTPUT_FILES: &[&str] = &[
    "manifest.txt",
    "cleaning.csv",
    "iqr_thresholds.csv",
    "splits.csv",
    "metrics.csv",
    "metrics_hourly.csv",
    "metrics_buckets.csv",
    "error_demand.csv",
    "paired_tests.csv",
    "diagnostics.csv",
    "variability.csv",
    "importance_with_id.csv",
    "importance_without_id.csv",
];
const OUTPUT_DIRS: &[&str] = &["regions", "models"];

fn prepare_output(dir: &Path) -> Result<(), PipelineError> {
    for f in OUTPUT_FILES {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| PipelineError::io(&p, e))?;
        }
    }
    for d in OUTPUT_DIRS {
        let p = dir.join(d);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
        }
    }
    for d in OUTPUT_DIRS {
        let p = dir.join(d);
        fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| PipelineError::io(path, e))
}

/// Writes `rows` as CSV; an empty table still gets `header`.
pub fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    if rows.is_empty() {
        wtr.write_record(header).map_err(|e| PipelineError::io(path, e))?;
    }
    for r in rows {
        wtr.serialize(r).map_err(|e| PipelineError::io(path, e))?;
    }
    wtr.flush().map_err(|e| PipelineError::io(path, e))
}

fn write_json(
    path: &Path,
    save: impl FnOnce(BufWriter<fs::File>) -> Result<(), ModelError>,
) -> Result<(), PipelineError> {
    save(create(path)?).map_err(|e| PipelineError::io(path, e))
}

fn model_err(stage: Stage, split: &str, regime: Regime) -> impl Fn(ModelError) -> PipelineError + '_ {
    move |e| PipelineError::failed(stage, format!("split {split}, {}: {e}", regime.name()))
}

#[derive(Serialize)]
struct ThresholdRow<'a> {
    split: &'a str,
    pct_lower: f64,
    pct_upper: f64,
    abs_lower: f64,
    abs_upper: f64,
}

#[derive(Serialize)]
struct SplitRow<'a> {
    split: &'a str,
    train_start: NaiveDate,
    train_end: NaiveDate,
    test_start: NaiveDate,
    test_end: NaiveDate,
    train_rows: usize,
    test_rows: usize,
    k: i64,
    regions: usize,
    ch_index: f64,
}

#[derive(Serialize)]
struct DiagnosticsRow<'a> {
    split: &'a str,
    cells: usize,
    pearson: Option<f64>,
    spearman: Option<f64>,
    kendall_tau: Option<f64>,
    ccc: Option<f64>,
}

#[derive(Serialize)]
struct VariabilityRow<'a> {
    split: &'a str,
    route_id: &'a str,
    hour: u8,
    n: usize,
    mean: f64,
    cv: Option<f64>,
    mad_over_median: Option<f64>,
    iqr_over_median: Option<f64>,
}

#[derive(Serialize)]
struct ErrorDemandRow<'a> {
    split: &'a str,
    regime: &'static str,
    framework: &'static str,
    stops: usize,
    slope: f64,
    intercept: f64,
    r2: f64,
}

/// Per-stop mean actual and per-stop MAE over one test window.
fn per_stop_errors(frame: &FeatureFrame, pred: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for ((s, y), p) in frame.stop_codes.iter().zip(&frame.target).zip(pred) {
        let a = acc.entry(s).or_default();
        a.0 += y;
        a.1 += (y - p).abs();
        a.2 += 1;
    }
    acc.values().map(|&(y, e, n)| (y / n as f64, e / n as f64)).unzip()
}

/// Runs every stage and writes the report directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new(Stage::Config, FailureKind::Config, e))?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
    prepare_output(&out)?;
    let clock = Instant::now();

    let data = ingest(cfg)?;
    let mut manifest_rows: Vec<(String, String)> = vec![
        ("apc_events".into(), data.apc.len().to_string()),
        ("weather_rows".into(), data.weather.len().to_string()),
        ("stops".into(), data.stops.len().to_string()),
        ("facilities".into(), data.facilities.len().to_string()),
        ("holidays".into(), data.holidays.dates.len().to_string()),
    ];

    let (kept, dropped) = plausibility_filters(&data.apc, cfg.delta);
    let inputs = Inputs::new(data, cfg.radius_m);
    let mut cleaning: Vec<CleaningRow> = dropped.into_iter().map(|d| CleaningRow::new("all", d)).collect();
    for reason in [DropReason::Negative, DropReason::Capacity] {
        let n = cleaning.iter().filter(|c| c.reason == reason).count();
        manifest_rows.push((
            format!("rides_dropped_{}", if reason == DropReason::Negative { "negative" } else { "capacity" }),
            n.to_string(),
        ));
    }
    manifest_rows.push(("events_after_plausibility".into(), kept.len().to_string()));
    info!("plausibility filters kept {} events ({:.1?})", kept.len(), clock.elapsed());

    let plans = plan_splits(cfg, &kept)?;
    manifest_rows.push(("splits".into(), plans.len().to_string()));
    let regimes = cfg.regime.expand();
    let params = cfg.model_params();

    let mut thresholds = Vec::new();
    let mut split_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut metric_rows = Vec::new();
    let mut hourly_rows: Vec<(String, Regime, &'static str, u8, MetricSet)> = Vec::new();
    let mut bucket_rows: Vec<(String, Regime, &'static str, &'static str, Option<MetricSet>)> = Vec::new();
    let mut error_rows: Vec<(String, Regime, &'static str, usize, f64, f64, f64)> = Vec::new();
    let mut diag_rows = Vec::new();
    let mut var_rows = Vec::new();
    let mut per_split_mae: BTreeMap<(usize, &'static str), Vec<f64>> = BTreeMap::new();
    // Test targets, predictions and hours of every split, for pooled strata.
    let mut pooled: BTreeMap<(usize, &'static str), (Vec<f64>, Vec<f64>, Vec<u8>)> = BTreeMap::new();
    let mut importance = Vec::new();

    for (si, plan) in plans.iter().enumerate() {
        let id = plan.id();
        let last = si + 1 == plans.len();
        let split = split_data(&kept, plan)?;
        cleaning.extend(dual_iqr_report(split.dropped.clone()).into_iter().map(|d| CleaningRow::new(&id, d)));
        thresholds.push((id.clone(), split.thresholds));
        if split.train.is_empty() || split.test.is_empty() {
            return Err(PipelineError::data(Stage::Clean, format!("split {id}: a window is empty after cleaning")));
        }

        let frames = split_frames(cfg, &inputs, &split.train, &split.test);
        info!(
            "split {id}: {} train / {} test rows, features built ({:.1?})",
            frames.train.rows(),
            frames.test.rows(),
            clock.elapsed()
        );

        let regions = regionalize(cfg, &inputs.coords, &split.train)?;
        let sel = &regions.selection;
        let region_map = regions.region_map();
        write_partition(create(&out.join("regions").join(format!("{id}.csv")))?, &regions.stops, sel)
            .map_err(|e| PipelineError::io(&out.join("regions"), e))?;
        write_rows(&out.join("regions").join(format!("{id}_sweep.csv")), &["k", "tau", "p", "ch", "wgss"], &sel.sweep)?;
        info!("split {id}: k = {}, {} regions ({:.1?})", sel.k, sel.partition.p, clock.elapsed());

        let diag = diagnostics(&split.train, &split.test);
        diag_rows.push((id.clone(), diag.agreement));
        for c in diag.cells {
            var_rows.push((id.clone(), c));
        }

        let baseline = frames.train.target.iter().sum::<f64>() / frames.train.rows() as f64;
        for &regime in &regimes {
            let train = regime_frame(&frames.train, regime);
            let test = regime_frame(&frames.test, regime);
            let err = model_err(Stage::Train, &id, regime);
            let global = train_global(&train, &params).map_err(&err)?;
            let polygon = if cfg.framework.wants_polygon() {
                Some(
                    train_polygonwise_with_fallback(&train, &region_map, &params, cfg.min_region_rows, global.clone())
                        .map_err(&err)?,
                )
            } else {
                None
            };
            let eval_err = model_err(Stage::Evaluate, &id, regime);
            let mut predictions: Vec<(&'static str, Vec<f64>)> = vec![("train_mean", vec![baseline; test.rows()])];
            if cfg.framework.wants_global() {
                predictions.push(("global", global.predict(&test).map_err(&eval_err)?));
            }
            if let Some(p) = &polygon {
                predictions.push(("polygon", p.predict(&test).map_err(&eval_err)?));
            }
            for (fw, pred) in &predictions {
                let m = metrics(&test.target, pred).map_err(|e| PipelineError::failed(Stage::Evaluate, e))?;
                metric_rows.push(MetricRow::new(&id, regime, fw, m));
                let ri = regimes.iter().position(|r| *r == regime).unwrap();
                per_split_mae.entry((ri, fw)).or_default().push(m.mae);
                let pool = pooled.entry((ri, fw)).or_default();
                pool.0.extend_from_slice(&test.target);
                pool.1.extend_from_slice(pred);
                pool.2.extend_from_slice(&frames.test_hours);
                for (h, m) in hourly_metrics(&test.target, pred, &frames.test_hours)
                    .map_err(|e| PipelineError::failed(Stage::Evaluate, e))?
                {
                    hourly_rows.push((id.clone(), regime, fw, h, m));
                }
                for s in bucketed_metrics(&test.target, pred).map_err(|e| PipelineError::failed(Stage::Evaluate, e))? {
                    bucket_rows.push((id.clone(), regime, fw, s.key, s.metrics));
                }
                if *fw != "train_mean" {
                    let (demand, mae) = per_stop_errors(&test, pred);
                    if let Ok(fit) = error_demand_regression(&demand, &mae) {
                        error_rows.push((id.clone(), regime, fw, demand.len(), fit.slope, fit.intercept, fit.r2));
                    }
                }
            }

            if last {
                let models = out.join("models");
                if cfg.framework.wants_global() {
                    write_json(&models.join(format!("{}_global.json", regime.name())), |w| global.save_json(w))?;
                }
                if let Some(p) = &polygon {
                    write_json(&models.join(format!("{}_polygon.json", regime.name())), |w| p.save_json(w))?;
                }
                if cfg.importance_repeats > 0 {
                    let att_err = model_err(Stage::Attribution, &id, regime);
                    let rep = match (&polygon, cfg.framework.wants_global()) {
                        (Some(p), false) => permutation_importance(p, &test, cfg.importance_repeats, cfg.seed),
                        _ => permutation_importance(&global, &test, cfg.importance_repeats, cfg.seed),
                    }
                    .map_err(att_err)?;
                    write_importance(create(&out.join(format!("importance_{}.csv", regime.name())))?, &rep)
                        .map_err(|e| PipelineError::io(&out, e))?;
                    info!("split {id}, {}: importance done ({:.1?})", regime.name(), clock.elapsed());
                    importance.push((regime, rep));
                }
            }
            info!("split {id}, {}: trained and evaluated ({:.1?})", regime.name(), clock.elapsed());
        }

        manifest_rows.push((format!("{id}.train_rows"), frames.train.rows().to_string()));
        manifest_rows.push((format!("{id}.test_rows"), frames.test.rows().to_string()));
        manifest_rows.push((format!("{id}.dual_iqr_rides"), split.dropped.len().to_string()));
        manifest_rows.push((format!("{id}.regions"), sel.partition.p.to_string()));
        split_rows.push((
            id.clone(),
            *plan,
            frames.train.rows(),
            frames.test.rows(),
            sel.k,
            sel.partition.p,
            sel.ch.value,
        ));
        summaries.push(SplitSummary {
            split: id,
            train_rows: frames.train.rows(),
            test_rows: frames.test.rows(),
            k: sel.k,
            regions: sel.partition.p,
            region_of: region_map,
        });
    }

    let mut paired = Vec::new();
    if cfg.framework.wants_global() && cfg.framework.wants_polygon() {
        for (ri, &regime) in regimes.iter().enumerate() {
            let r = compare_frameworks(&per_split_mae[&(ri, "polygon")], &per_split_mae[&(ri, "global")], cfg.alpha)
                .map_err(|e| PipelineError::failed(Stage::Tests, e))?;
            paired.push((regime, r));
        }
    }

    write_rows(
        &out.join("cleaning.csv"),
        &["split", "trip_key", "reason", "tb", "ta", "pct_diff", "abs_diff"],
        &cleaning,
    )?;
    let rows: Vec<ThresholdRow> = thresholds
        .iter()
        .map(|(s, t)| ThresholdRow {
            split: s,
            pct_lower: t.pct_lower,
            pct_upper: t.pct_upper,
            abs_lower: t.abs_lower,
            abs_upper: t.abs_upper,
        })
        .collect();
    write_rows(&out.join("iqr_thresholds.csv"), &[], &rows)?;
    let rows: Vec<SplitRow> = split_rows
        .iter()
        .map(|(s, p, tr, te, k, r, ch)| SplitRow {
            split: s,
            train_start: p.train_start,
            train_end: p.train_end,
            test_start: p.test_start,
            test_end: p.test_end,
            train_rows: *tr,
            test_rows: *te,
            k: *k,
            regions: *r,
            ch_index: *ch,
        })
        .collect();
    write_rows(&out.join("splits.csv"), &[], &rows)?;
    write_rows(&out.join("metrics.csv"), &[], &metric_rows)?;
    let stratum_err = |e| PipelineError::failed(Stage::Evaluate, e);
    let mut rows: Vec<StratumRow<u8>> =
        hourly_rows.iter().map(|(s, r, f, h, m)| StratumRow::new(s, *r, f, *h, Some(*m))).collect();
    let mut extra = split_moments(&rows);
    for (&(ri, fw), (y, pred, hours)) in &pooled {
        for (h, m) in hourly_metrics(y, pred, hours).map_err(stratum_err)? {
            extra.push(StratumRow::new("pooled", regimes[ri], fw, h, Some(m)));
        }
    }
    rows.extend(extra);
    write_rows(&out.join("metrics_hourly.csv"), &[], &rows)?;
    let mut rows: Vec<StratumRow<&str>> =
        bucket_rows.iter().map(|(s, r, f, b, m)| StratumRow::new(s, *r, f, *b, *m)).collect();
    let mut extra = split_moments(&rows);
    for (&(ri, fw), (y, pred, _)) in &pooled {
        for s in bucketed_metrics(y, pred).map_err(stratum_err)? {
            extra.push(StratumRow::new("pooled", regimes[ri], fw, s.key, s.metrics));
        }
    }
    rows.extend(extra);
    write_rows(&out.join("metrics_buckets.csv"), &[], &rows)?;
    let rows: Vec<ErrorDemandRow> = error_rows
        .iter()
        .map(|(s, r, f, n, slope, intercept, r2)| ErrorDemandRow {
            split: s,
            regime: r.name(),
            framework: f,
            stops: *n,
            slope: *slope,
            intercept: *intercept,
            r2: *r2,
        })
        .collect();
    write_rows(
        &out.join("error_demand.csv"),
        &["split", "regime", "framework", "stops", "slope", "intercept", "r2"],
        &rows,
    )?;
    let rows: Vec<PairedCsvRow> = paired.iter().map(|(r, p)| PairedCsvRow::new(*r, p)).collect();
    write_rows(
        &out.join("paired_tests.csv"),
        &["regime", "n", "mean_diff", "median_diff", "statistic", "p_value", "cliffs_delta", "verdict"],
        &rows,
    )?;
    let rows: Vec<DiagnosticsRow> = diag_rows
        .iter()
        .map(|(s, a)| DiagnosticsRow {
            split: s,
            cells: a.n,
            pearson: a.pearson,
            spearman: a.spearman,
            kendall_tau: a.kendall_tau,
            ccc: a.ccc,
        })
        .collect();
    write_rows(&out.join("diagnostics.csv"), &[], &rows)?;
    let rows: Vec<VariabilityRow> = var_rows
        .iter()
        .map(|(s, c)| VariabilityRow {
            split: s,
            route_id: &c.route_id,
            hour: c.hour,
            n: c.n,
            mean: c.mean,
            cv: c.cv,
            mad_over_median: c.mad_over_median,
            iqr_over_median: c.iqr_over_median,
        })
        .collect();
    write_rows(&out.join("variability.csv"), &[], &rows)?;

    let manifest = render_manifest(cfg, &manifest_rows);
    fs::write(out.join("manifest.txt"), &manifest).map_err(|e| PipelineError::io(&out, e))?;
    info!("run complete in {:.1?}", clock.elapsed());

    Ok(RunReport { cleaning, splits: summaries, metrics: metric_rows, paired, importance, manifest })
}

#[derive(Serialize)]
struct PairedCsvRow {
    regime: &'static str,
    n: usize,
    mean_diff: f64,
    median_diff: f64,
    statistic: f64,
    p_value: f64,
    cliffs_delta: f64,
    verdict: crate::evaluation::Verdict,
}

impl PairedCsvRow {
    fn new(regime: Regime, p: &PairedTestResult) -> Self {
        PairedCsvRow {
            regime: regime.name(),
            n: p.n,
            mean_diff: p.mean_diff,
            median_diff: p.median_diff,
            statistic: p.statistic,
            p_value: p.p_value,
            cliffs_delta: p.cliffs_delta,
            verdict: p.verdict,
        }
    }
}

/// Config echo, versions and row counts; deliberately free of timestamps and
/// output locations so identical runs produce identical manifests.
pub fn render_manifest(cfg: &RunConfig, rows: &[(String, String)]) -> String {
    let mut s = String::new();
    s.push_str("# ridership run manifest\n");
    s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("model_format_version = {MODEL_FORMAT_VERSION}\n"));
    s.push_str(&format!("config_hash = {}\n", cfg.hash()));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str("\n[config]\n");
    s.push_str(&cfg.semantic_echo());
    s.push_str("\n[rows]\n");
    for (k, v) in rows {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

/// Reads the `config_hash` line of an existing manifest, if any.
pub fn manifest_hash(dir: &Path) -> Option<String> {
    let text = fs::read_to_string(dir.join("manifest.txt")).ok()?;
    text.lines().find_map(|l| l.strip_prefix("config_hash = ").map(str::to_string))
}

/// Events whose date falls in `[start, end]`.
pub fn events_between(events: &[ApcStopEvent], start: NaiveDate, end: NaiveDate) -> Vec<ApcStopEvent> {
    events.iter().filter(|e| (start..=end).contains(&e.departure_time.date())).cloned().collect()
}
