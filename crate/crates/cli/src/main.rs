use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;
use ridership::attribution::{permutation_importance, write_importance};
use ridership::cleaning::{
    dual_criterion_filter, dual_iqr_report, iqr_thresholds, plausibility_filters, ride_discrepancies,
    write_cleaning_report,
};
use ridership::config::{ConfigError, RunConfig};
use ridership::features::write_feature_frame;
use ridership::ingestion::write_apc;
use ridership::models::{train_global, train_polygonwise_with_fallback, ModelError};
use ridership::pipeline::{
    ingest, plan_splits, regime_frame, regionalize, run_pipeline, split_data, split_frames, write_rows, FailureKind,
    Inputs, PipelineError, Stage,
};
use ridership::regionalization::write_partition;
use ridership::synth::{generate_synthetic_city, SynthSpec};

/// Stop-level bus ridership forecasting.
#[derive(Parser)]
#[command(name = "ridership", version)]
struct Cli {
    /// Upper bound on worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the input tables.
    Ingest(ConfigArgs),
    /// Drop implausible rides; writes apc_clean.csv and cleaning.csv.
    Clean(ConfigArgs),
    /// Build the feature table over the whole input; writes features.csv.
    Features(ConfigArgs),
    /// Max-p regionalization over the whole input; writes partition.csv.
    Regionalize(ConfigArgs),
    /// Train on the whole input; writes models/<regime>_<framework>.json.
    Train(ConfigArgs),
    /// Rolling-origin evaluation without attribution.
    Evaluate(ConfigArgs),
    /// Permutation importance on the last evaluation split.
    Importance(ConfigArgs),
    /// Every stage end to end.
    Run(ConfigArgs),
    /// Generate a synthetic city with known structure.
    Synth(SynthArgs),
}

macro_rules! config_flags {
    ($($field:ident),* $(,)?) => {
        /// A config file plus per-key overrides. Each flag takes the key's
        /// name (`--k_grid`, or `--k-grid`).
        #[derive(Args)]
        struct ConfigArgs {
            /// key = value configuration file.
            #[arg(long)]
            config: Option<PathBuf>,
            /// Directory holding apc.csv, weather.csv, stops.csv, facilities.csv and holidays.csv.
            #[arg(long, alias = "data-dir")]
            data_dir: Option<String>,
            $(
                #[arg(long, alias = stringify!($field))]
                $field: Option<String>,
            )*
        }

        impl ConfigArgs {
            fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut v = Vec::new();
                if let Some(x) = &self.data_dir {
                    v.push(("data_dir", x.as_str()));
                }
                $(
                    if let Some(x) = &self.$field {
                        v.push((stringify!($field), x.as_str()));
                    }
                )*
                v
            }
        }
    };
}

config_flags!(
    apc,
    weather,
    stops,
    facilities,
    holidays,
    output_dir,
    delta,
    radius_m,
    h1,
    h2,
    k_grid,
    model,
    trees,
    depth,
    learning_rate,
    min_leaf,
    subsample,
    feature_frac,
    bootstrap,
    regime,
    framework,
    seed,
    rest_days,
    weather_tolerance_min,
    min_region_rows,
    importance_repeats,
    alpha,
);

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the generated tables.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 120)]
    n_stops: usize,
    /// Total routes, split evenly between the two clusters.
    #[arg(long, default_value_t = 4)]
    n_routes: usize,
    #[arg(long, default_value_t = 60)]
    days: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// First service day (YYYY-MM-DD).
    #[arg(long, default_value = "2024-01-01")]
    start: NaiveDate,
    #[arg(long, default_value_t = 180)]
    headway_min: u32,
}

fn config_error(e: ConfigError) -> PipelineError {
    PipelineError::new(Stage::Config, FailureKind::Config, e)
}

fn load_config(args: &ConfigArgs, jobs: Option<usize>) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(ConfigError::Read { path: path.clone(), message: e.to_string() }))?;
        cfg.apply_text(&text).map_err(config_error)?;
    }
    for (k, v) in args.overrides() {
        cfg.set(k, v).map_err(config_error)?;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn io_err(stage: Stage, path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(stage, FailureKind::Stage, format!("{}: {e}", path.display()))
}

fn create(stage: Stage, path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(stage, parent, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(stage, path, e))
}

fn model_err(stage: Stage) -> impl Fn(ModelError) -> PipelineError {
    move |e| PipelineError::new(stage, FailureKind::Stage, e)
}

fn cmd_ingest(cfg: &RunConfig) -> Result<(), PipelineError> {
    let d = ingest(cfg)?;
    println!("apc_events = {}", d.apc.len());
    println!("weather_rows = {}", d.weather.len());
    println!("stops = {}", d.stops.len());
    println!("facilities = {}", d.facilities.len());
    println!("holidays = {}", d.holidays.dates.len());
    Ok(())
}

fn cmd_clean(cfg: &RunConfig) -> Result<(), PipelineError> {
    let data = ingest(cfg)?;
    let (kept, mut report) = plausibility_filters(&data.apc, cfg.delta);
    let thresholds = iqr_thresholds(&ride_discrepancies(&kept))
        .map_err(|e| PipelineError::new(Stage::Clean, FailureKind::Data, e))?;
    let (kept, dual) = dual_criterion_filter(&kept, &thresholds);
    report.extend(dual_iqr_report(dual));
    let out = &cfg.output_dir;
    let path = out.join("apc_clean.csv");
    write_apc(create(Stage::Clean, &path)?, &kept).map_err(|e| io_err(Stage::Clean, &path, e))?;
    write_cleaning_report(create(Stage::Clean, &out.join("cleaning.csv"))?, &report)
        .map_err(|e| io_err(Stage::Clean, out, e))?;
    write_rows(&out.join("iqr_thresholds.csv"), &[], &[thresholds])?;
    println!("kept {} events; dropped {} rides", kept.len(), report.len());
    Ok(())
}

fn cleaned_inputs(cfg: &RunConfig) -> Result<(Inputs, Vec<ridership::ingestion::ApcStopEvent>), PipelineError> {
    let data = ingest(cfg)?;
    let (kept, _) = plausibility_filters(&data.apc, cfg.delta);
    Ok((Inputs::new(data, cfg.radius_m), kept))
}

fn cmd_features(cfg: &RunConfig) -> Result<(), PipelineError> {
    let (inputs, events) = cleaned_inputs(cfg)?;
    let frames = split_frames(cfg, &inputs, &events, &[]);
    let path = cfg.output_dir.join("features.csv");
    write_feature_frame(create(Stage::Features, &path)?, &frames.train)
        .map_err(|e| io_err(Stage::Features, &path, e))?;
    println!("{} rows x {} features -> {}", frames.train.rows(), frames.train.names.len(), path.display());
    Ok(())
}

fn cmd_regionalize(cfg: &RunConfig) -> Result<(), PipelineError> {
    let (inputs, events) = cleaned_inputs(cfg)?;
    let regions = regionalize(cfg, &inputs.coords, &events)?;
    let path = cfg.output_dir.join("partition.csv");
    write_partition(create(Stage::Regionalize, &path)?, &regions.stops, &regions.selection)
        .map_err(|e| io_err(Stage::Regionalize, &path, e))?;
    write_rows(
        &cfg.output_dir.join("partition_sweep.csv"),
        &["k", "tau", "p", "ch", "wgss"],
        &regions.selection.sweep,
    )?;
    println!("k = {}, {} regions -> {}", regions.selection.k, regions.selection.partition.p, path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), PipelineError> {
    let (inputs, events) = cleaned_inputs(cfg)?;
    let frames = split_frames(cfg, &inputs, &events, &[]);
    let params = cfg.model_params();
    let region_map: Option<BTreeMap<String, usize>> = if cfg.framework.wants_polygon() {
        Some(regionalize(cfg, &inputs.coords, &events)?.region_map())
    } else {
        None
    };
    for regime in cfg.regime.expand() {
        let frame = regime_frame(&frames.train, regime);
        let global = train_global(&frame, &params).map_err(model_err(Stage::Train))?;
        let models = cfg.output_dir.join("models");
        if let Some(map) = &region_map {
            let ens = train_polygonwise_with_fallback(&frame, map, &params, cfg.min_region_rows, global.clone())
                .map_err(model_err(Stage::Train))?;
            let path = models.join(format!("{}_polygon.json", regime.name()));
            ens.save_json(create(Stage::Train, &path)?).map_err(model_err(Stage::Train))?;
        }
        if cfg.framework.wants_global() {
            let path = models.join(format!("{}_global.json", regime.name()));
            global.save_json(create(Stage::Train, &path)?).map_err(model_err(Stage::Train))?;
        }
        info!("trained {} models on {} rows", regime.name(), frame.rows());
    }
    Ok(())
}

fn cmd_importance(cfg: &RunConfig) -> Result<(), PipelineError> {
    let (inputs, events) = cleaned_inputs(cfg)?;
    let plan = *plan_splits(cfg, &events)?.last().expect("at least one split");
    let split = split_data(&events, &plan)?;
    let frames = split_frames(cfg, &inputs, &split.train, &split.test);
    let repeats = cfg.importance_repeats.max(1);
    for regime in cfg.regime.expand() {
        let model =
            train_global(&regime_frame(&frames.train, regime), &cfg.model_params()).map_err(model_err(Stage::Train))?;
        let report = permutation_importance(&model, &regime_frame(&frames.test, regime), repeats, cfg.seed)
            .map_err(model_err(Stage::Attribution))?;
        let path = cfg.output_dir.join(format!("importance_{}.csv", regime.name()));
        write_importance(create(Stage::Attribution, &path)?, &report)
            .map_err(|e| io_err(Stage::Attribution, &path, e))?;
        if let Some(top) = report.top() {
            println!(
                "{} on split {}: top feature {} ({:.4})",
                regime.name(),
                plan.id(),
                top.feature,
                top.mean_importance
            );
        }
    }
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> Result<(), PipelineError> {
    let report = run_pipeline(cfg)?;
    for m in report.metrics.iter() {
        println!("{} {:>10} {:>10}  mae {:.4}  rmse {:.4}", m.split, m.regime, m.framework, m.mae, m.rmse);
    }
    for (regime, p) in &report.paired {
        println!(
            "{}: polygon - global mean MAE diff {:.4}, p = {:.4} ({:?})",
            regime.name(),
            p.mean_diff,
            p.p_value,
            p.verdict
        );
    }
    println!("report written to {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), PipelineError> {
    let spec = SynthSpec {
        n_stops: args.n_stops,
        n_routes: args.n_routes,
        days: args.days,
        seed: args.seed,
        start: args.start,
        headway_min: args.headway_min,
        ..SynthSpec::default()
    };
    let city = generate_synthetic_city(&spec).map_err(|e| match e {
        ridership::synth::SynthError::Spec(m) => PipelineError::new(Stage::Config, FailureKind::Config, m),
        other => PipelineError::new(Stage::Report, FailureKind::Stage, other),
    })?;
    city.write(&args.out).map_err(|e| io_err(Stage::Report, &args.out, e))?;
    println!(
        "{} stops, {} events, {} injected bad rides -> {}",
        city.stops.len(),
        city.apc.len(),
        city.truth.injected.len(),
        args.out.display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    let jobs = cli.jobs;
    let cfg = |a: &ConfigArgs| load_config(a, jobs);
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&cfg(a)?),
        Command::Clean(a) => cmd_clean(&cfg(a)?),
        Command::Features(a) => cmd_features(&cfg(a)?),
        Command::Regionalize(a) => cmd_regionalize(&cfg(a)?),
        Command::Train(a) => cmd_train(&cfg(a)?),
        Command::Evaluate(a) => {
            let mut c = cfg(a)?;
            c.importance_repeats = 0;
            cmd_run(&c)
        }
        Command::Importance(a) => cmd_importance(&cfg(a)?),
        Command::Run(a) => cmd_run(&cfg(a)?),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs.filter(|&j| j > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
