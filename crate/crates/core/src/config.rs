//! Run configuration: a line-oriented `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key can also be
//! set programmatically through [`RunConfig::set`], which is how the command
//! line overrides file values. The canonical echo ([`RunConfig::echo`]) lists
//! every key in a fixed order; the run hash covers the keys that can change
//! results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::Weekday;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::models::{ForestParams, GbdtParams, ModelKind, ModelParams, DEFAULT_MIN_REGION_ROWS};
use crate::temporal::DEFAULT_REST_DAYS;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    WithId,
    WithoutId,
    Both,
}

impl Regime {
    pub fn expand(self) -> Vec<Regime> {
        match self {
            Regime::Both => vec![Regime::WithId, Regime::WithoutId],
            r => vec![r],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::WithId => "with_id",
            Regime::WithoutId => "without_id",
            Regime::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framework {
    Global,
    Polygon,
    Both,
}

impl Framework {
    pub fn name(self) -> &'static str {
        match self {
            Framework::Global => "global",
            Framework::Polygon => "polygon",
            Framework::Both => "both",
        }
    }

    pub fn wants_global(self) -> bool {
        self != Framework::Polygon
    }

    pub fn wants_polygon(self) -> bool {
        self != Framework::Global
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub apc: PathBuf,
    pub weather: PathBuf,
    pub stops: PathBuf,
    pub facilities: PathBuf,
    pub holidays: PathBuf,
    pub output_dir: PathBuf,
    pub delta: i64,
    pub radius_m: f64,
    pub h1: u32,
    pub h2: u32,
    pub k_grid: Vec<i64>,
    pub model: ModelKind,
    pub trees: usize,
    /// 0 means unlimited (random forest only).
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: u32,
    pub subsample: f64,
    pub feature_frac: f64,
    pub bootstrap: bool,
    pub regime: Regime,
    pub framework: Framework,
    pub seed: u64,
    pub rest_days: Vec<Weekday>,
    pub weather_tolerance_min: i64,
    pub min_region_rows: usize,
    /// Permutation repeats; 0 skips the attribution stage.
    pub importance_repeats: usize,
    pub alpha: f64,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GbdtParams::default();
        RunConfig {
            apc: "apc.csv".into(),
            weather: "weather.csv".into(),
            stops: "stops.csv".into(),
            facilities: "facilities.csv".into(),
            holidays: "holidays.csv".into(),
            output_dir: "report".into(),
            delta: 50,
            radius_m: 200.0,
            h1: 7,
            h2: 7,
            k_grid: (1..=10).map(|i| i * 5).collect(),
            model: ModelKind::Gbdt,
            trees: g.trees,
            depth: g.depth,
            learning_rate: g.learning_rate,
            min_leaf: g.min_leaf,
            subsample: g.subsample,
            feature_frac: ForestParams::default().feature_frac,
            bootstrap: true,
            regime: Regime::WithId,
            framework: Framework::Both,
            seed: 42,
            rest_days: DEFAULT_REST_DAYS.to_vec(),
            weather_tolerance_min: 30,
            min_region_rows: DEFAULT_MIN_REGION_ROWS,
            importance_repeats: crate::attribution::DEFAULT_REPEATS,
            alpha: 0.05,
            jobs: 0,
        }
    }
}

/// Every recognized key, in echo order.
pub const KEYS: &[&str] = &[
    "apc",
    "weather",
    "stops",
    "facilities",
    "holidays",
    "output_dir",
    "delta",
    "radius_m",
    "h1",
    "h2",
    "k_grid",
    "model",
    "trees",
    "depth",
    "learning_rate",
    "min_leaf",
    "subsample",
    "feature_frac",
    "bootstrap",
    "regime",
    "framework",
    "seed",
    "rest_days",
    "weather_tolerance_min",
    "min_region_rows",
    "importance_repeats",
    "alpha",
    "jobs",
];

/// Keys that do not change results and are left out of the run hash.
const NON_SEMANTIC: &[&str] = &["output_dir", "jobs"];

fn weekday_name(d: Weekday) -> &'static str {
    match d {
        Weekday::Mon => "mon",
        Weekday::Tue => "tue",
        Weekday::Wed => "wed",
        Weekday::Thu => "thu",
        Weekday::Fri => "fri",
        Weekday::Sat => "sat",
        Weekday::Sun => "sun",
    }
}

/// `5..50:5` (inclusive range with step), or a comma list `2,3,4`.
fn parse_grid(s: &str) -> Result<Vec<i64>, String> {
    let grid: Vec<i64> = if let Some((range, step)) = s.split_once(':') {
        let (a, b) = range.split_once("..").ok_or("range must look like a..b:step")?;
        let (a, b, step): (i64, i64, i64) = (
            a.trim().parse().map_err(|_| "bad range start")?,
            b.trim().parse().map_err(|_| "bad range end")?,
            step.trim().parse().map_err(|_| "bad step")?,
        );
        if step <= 0 || a > b {
            return Err("range needs start <= end and a positive step".into());
        }
        (a..=b).step_by(step as usize).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<i64>().map_err(|_| format!("bad integer {t:?}")))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|&k| k <= 0) {
        return Err("grid must be non-empty and positive".into());
    }
    Ok(grid)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

impl RunConfig {
    /// Defaults with the five input paths pointing into `dir`.
    pub fn for_data_dir(dir: &Path) -> Self {
        RunConfig {
            apc: dir.join("apc.csv"),
            weather: dir.join("weather.csv"),
            stops: dir.join("stops.csv"),
            facilities: dir.join("facilities.csv"),
            holidays: dir.join("holidays.csv"),
            ..RunConfig::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |reason: String| ConfigError::BadValue { key: key.into(), value: value.into(), reason };
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| "not a number".to_string())
        }
        match key {
            "apc" => self.apc = value.into(),
            "weather" => self.weather = value.into(),
            "stops" => self.stops = value.into(),
            "facilities" => self.facilities = value.into(),
            "holidays" => self.holidays = value.into(),
            "data_dir" => {
                let d = PathBuf::from(value);
                self.apc = d.join("apc.csv");
                self.weather = d.join("weather.csv");
                self.stops = d.join("stops.csv");
                self.facilities = d.join("facilities.csv");
                self.holidays = d.join("holidays.csv");
            }
            "output_dir" => self.output_dir = value.into(),
            "delta" => self.delta = num(value).map_err(bad)?,
            "radius_m" => self.radius_m = num(value).map_err(bad)?,
            "h1" => self.h1 = num(value).map_err(bad)?,
            "h2" => self.h2 = num(value).map_err(bad)?,
            "k_grid" => self.k_grid = parse_grid(value).map_err(bad)?,
            "model" => {
                self.model = match value {
                    "gbdt" => ModelKind::Gbdt,
                    "random_forest" | "rf" => ModelKind::RandomForest,
                    "ols" => ModelKind::Ols,
                    _ => return Err(bad("expected gbdt, random_forest or ols".into())),
                }
            }
            "trees" => self.trees = num(value).map_err(bad)?,
            "depth" => self.depth = num(value).map_err(bad)?,
            "learning_rate" => self.learning_rate = num(value).map_err(bad)?,
            "min_leaf" => self.min_leaf = num(value).map_err(bad)?,
            "subsample" => self.subsample = num(value).map_err(bad)?,
            "feature_frac" => self.feature_frac = num(value).map_err(bad)?,
            "bootstrap" => self.bootstrap = parse_bool(value).map_err(bad)?,
            "regime" => {
                self.regime = match value {
                    "with_id" => Regime::WithId,
                    "without_id" => Regime::WithoutId,
                    "both" => Regime::Both,
                    _ => return Err(bad("expected with_id, without_id or both".into())),
                }
            }
            "framework" => {
                self.framework = match value {
                    "global" => Framework::Global,
                    "polygon" => Framework::Polygon,
                    "both" => Framework::Both,
                    _ => return Err(bad("expected global, polygon or both".into())),
                }
            }
            "seed" => self.seed = num(value).map_err(bad)?,
            "rest_days" => {
                self.rest_days = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|d| d.trim().parse::<Weekday>().map_err(|_| bad(format!("bad weekday {d:?}"))))
                        .collect::<Result<_, _>>()?
                }
            }
            "weather_tolerance_min" => self.weather_tolerance_min = num(value).map_err(bad)?,
            "min_region_rows" => self.min_region_rows = num(value).map_err(bad)?,
            "importance_repeats" => self.importance_repeats = num(value).map_err(bad)?,
            "alpha" => self.alpha = num(value).map_err(bad)?,
            "jobs" => self.jobs = num(value).map_err(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.into() })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.delta < 0 {
            return bad("delta must be non-negative");
        }
        if !(self.radius_m >= 0.0 && self.radius_m.is_finite()) {
            return bad("radius_m must be a non-negative number");
        }
        if self.h1 == 0 || self.h2 == 0 {
            return bad("h1 and h2 must be positive");
        }
        if self.weather_tolerance_min < 0 {
            return bad("weather_tolerance_min must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must be in (0, 1)");
        }
        if self.trees == 0 && self.model != ModelKind::Ols {
            return bad("trees must be positive");
        }
        if self.model == ModelKind::Gbdt && self.depth == 0 {
            return bad("depth must be positive for gbdt");
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        match self.model {
            ModelKind::Ols => ModelParams::Ols,
            ModelKind::Gbdt => ModelParams::Gbdt(GbdtParams {
                trees: self.trees,
                depth: self.depth,
                learning_rate: self.learning_rate,
                min_leaf: self.min_leaf,
                subsample: self.subsample,
                seed: self.seed,
            }),
            ModelKind::RandomForest => ModelParams::RandomForest(ForestParams {
                trees: self.trees,
                depth: (self.depth > 0).then_some(self.depth),
                min_leaf: self.min_leaf,
                feature_frac: self.feature_frac,
                bootstrap: self.bootstrap,
                seed: self.seed,
            }),
        }
    }

    fn value_of(&self, key: &str) -> String {
        let path = |p: &Path| p.display().to_string();
        match key {
            "apc" => path(&self.apc),
            "weather" => path(&self.weather),
            "stops" => path(&self.stops),
            "facilities" => path(&self.facilities),
            "holidays" => path(&self.holidays),
            "output_dir" => path(&self.output_dir),
            "delta" => self.delta.to_string(),
            "radius_m" => self.radius_m.to_string(),
            "h1" => self.h1.to_string(),
            "h2" => self.h2.to_string(),
            "k_grid" => self.k_grid.iter().map(i64::to_string).collect::<Vec<_>>().join(","),
            "model" => self.model.name().into(),
            "trees" => self.trees.to_string(),
            "depth" => self.depth.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "min_leaf" => self.min_leaf.to_string(),
            "subsample" => self.subsample.to_string(),
            "feature_frac" => self.feature_frac.to_string(),
            "bootstrap" => self.bootstrap.to_string(),
            "regime" => self.regime.name().into(),
            "framework" => self.framework.name().into(),
            "seed" => self.seed.to_string(),
            "rest_days" => self.rest_days.iter().map(|d| weekday_name(*d)).collect::<Vec<_>>().join(","),
            "weather_tolerance_min" => self.weather_tolerance_min.to_string(),
            "min_region_rows" => self.min_region_rows.to_string(),
            "importance_repeats" => self.importance_repeats.to_string(),
            "alpha" => self.alpha.to_string(),
            "jobs" => self.jobs.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key in canonical order; parsing the echo reproduces the config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.value_of(k));
        }
        s
    }

    /// The echo without keys that cannot change results (output location,
    /// worker count).
    pub fn semantic_echo(&self) -> String {
        let mut s = String::new();
        for k in KEYS.iter().filter(|k| !NON_SEMANTIC.contains(k)) {
            let _ = writeln!(s, "{k} = {}", self.value_of(k));
        }
        s
    }

    /// SHA-256 of [`RunConfig::semantic_echo`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.semantic_echo().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
