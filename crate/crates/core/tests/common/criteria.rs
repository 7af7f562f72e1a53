//! One check per acceptance criterion. Each returns a one-line summary on
//! success and a description of the first violation otherwise, so the same
//! code backs both the focused test files and the acceptance report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ridership::attribution::permutation_importance;
use ridership::cleaning::{iqr_bounds, plausibility_filters};
use ridership::config::{Regime, RunConfig};
use ridership::evaluation::{kendall_tau_b, metrics, rolling_splits, wilcoxon_signed_rank, Month};
use ridership::models::tree::{fit_tree, BinnedMatrix, TreeParams};
use ridership::models::{
    gbdt_fit, ols_fit, rf_fit, train_global, train_polygonwise, ForestParams, GbdtParams, Predictor,
};
use ridership::network::centrality::{betweenness, closeness, DiGraph};
use ridership::network::ROUTE_FEATURES;
use ridership::pipeline::{plan_splits, regime_frame, run_pipeline, split_data, split_frames, Dataset, Inputs};
use ridership::regionalization::{adjusted_rand_index, gabriel_graph, maxp};
use ridership::synth::{generate_synthetic_city, SynthSpec};

use super::oracles::*;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

pub fn protocol() -> Outcome {
    let jan = rolling_splits(&[Month { year: 2024, month: 1 }], 7, 7).map_err(|e| e.to_string())?;
    ensure(jan.len() == 2, || format!("January gave {} plans", jan.len()))?;
    let (w1, w2) = (&jan[0], &jan[1]);
    ensure(w1.train_start == d(2024, 1, 1) && w1.train_end == d(2024, 1, 17), || format!("W1 train {w1:?}"))?;
    ensure(w1.test_start == d(2024, 1, 18) && w1.test_end == d(2024, 1, 24), || format!("W1 test {w1:?}"))?;
    ensure(w2.test_start == d(2024, 1, 25) && w2.test_end == d(2024, 1, 31), || format!("W2 test {w2:?}"))?;
    ensure(w2.train_start == d(2024, 1, 1) && w2.train_end == d(2024, 1, 24), || format!("W2 train {w2:?}"))?;
    let months: Vec<Month> = (1..=7).map(|m| Month { year: 2023, month: m }).collect();
    let plans = rolling_splits(&months, 7, 7).map_err(|e| e.to_string())?;
    ensure(plans.len() == 14, || format!("7 months gave {} plans", plans.len()))?;
    Ok("Jan 1–17 / 18–24 / 25–31; 7 months → 14 plans".into())
}

pub fn graph_oracles(cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n = rng.gen_range(1..=10);
        let p = rng.gen_range(0.1..0.6);
        let edges = random_digraph(&mut rng, n, p);
        let g = DiGraph::new(n, edges.iter().copied());
        let b = betweenness(&g);
        let c = closeness(&g);
        let (node_q, edge_q) = betweenness_oracle(n, &edges);
        let close_q = closeness_oracle(n, &edges);

        let mut check = |what: &str, got: f64, want: Q| -> Result<(), String> {
            let err = (got - to_f64(want)).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("case {case} (n={n}): {what} = {got}, oracle {want}"))
        };
        for v in 0..n {
            check(&format!("betweenness[{v}]"), b.node[v], node_q[v])?;
            check(&format!("closeness[{v}]"), c[v], close_q[v])?;
        }
        let lib_edges: Vec<(usize, usize)> = g.edges().collect();
        ensure(lib_edges == edge_q.keys().copied().collect::<Vec<_>>(), || format!("case {case}: edge order differs"))?;
        for (i, e) in lib_edges.iter().enumerate() {
            check(&format!("edge betweenness {e:?}"), b.edge[i], edge_q[e])?;
        }
    }
    Ok(format!("{cases} digraphs (n ≤ 10), max abs error {worst:.1e}"))
}

fn random_points<R: Rng>(rng: &mut R, n: usize, span_deg: f64) -> Vec<(f64, f64)> {
    (0..n).map(|_| (31.25 + rng.gen_range(-span_deg..span_deg), 34.79 + rng.gen_range(-span_deg..span_deg))).collect()
}

pub fn gabriel(cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut total_edges = 0;
    for case in 0..cases {
        let n = if case == 0 { 200 } else { rng.gen_range(2..=200) };
        let points = random_points(&mut rng, n, 0.05);
        let got: BTreeSet<(usize, usize)> =
            gabriel_graph(&points).map_err(|e| e.to_string())?.edges().into_iter().collect();
        let want: BTreeSet<(usize, usize)> = gabriel_oracle(&points).into_iter().collect();
        if got != want {
            let extra: Vec<_> = got.difference(&want).take(3).collect();
            let missing: Vec<_> = want.difference(&got).take(3).collect();
            return Err(format!("case {case} (n={n}): extra {extra:?}, missing {missing:?}"));
        }
        total_edges += got.len();
    }
    Ok(format!("{cases} point sets (n ≤ 200), {total_edges} edges identical"))
}

struct MaxpInstance {
    points: Vec<(f64, f64)>,
    loads: Vec<f64>,
    tau: f64,
}

fn maxp_instance<R: Rng>(rng: &mut R, n: usize) -> MaxpInstance {
    let points = random_points(rng, n, 0.03);
    let loads: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=20) as f64).collect();
    let total: f64 = loads.iter().sum();
    let k = rng.gen_range(1..=(n / 2).max(1)) as f64;
    MaxpInstance { points, loads, tau: total / k }
}

pub fn maxp_feasibility(cases: usize, small_runs: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..cases {
        let n = rng.gen_range(2..=80);
        let inst = maxp_instance(&mut rng, n);
        let graph = gabriel_graph(&inst.points).map_err(|e| e.to_string())?;
        let part = maxp(&graph, &inst.loads, inst.tau, case as u64).map_err(|e| format!("case {case}: {e}"))?;
        ensure(part.region_of.len() == n && part.p >= 1, || format!("case {case}: malformed partition"))?;
        for r in 0..part.p {
            let members: Vec<usize> = (0..n).filter(|&v| part.region_of[v] == r).collect();
            let sum: f64 = members.iter().map(|&v| inst.loads[v]).sum();
            ensure(sum >= inst.tau, || format!("case {case}: region {r} sums to {sum} < τ = {}", inst.tau))?;
            ensure(connected_subset(&graph.adj, &members), || format!("case {case}: region {r} is not contiguous"))?;
        }
    }

    let mut optimal = 0;
    for run in 0..small_runs {
        let n = rng.gen_range(3..=8);
        let inst = maxp_instance(&mut rng, n);
        let graph = gabriel_graph(&inst.points).map_err(|e| e.to_string())?;
        let best = exhaustive_max_p(&graph.adj, &inst.loads, inst.tau);
        let part = maxp(&graph, &inst.loads, inst.tau, run as u64).map_err(|e| format!("run {run}: {e}"))?;
        ensure(part.p <= best, || {
            format!("run {run}: heuristic p = {} exceeds the exhaustive maximum {best}", part.p)
        })?;
        optimal += (part.p == best) as usize;
    }
    let needed = (small_runs * 9).div_ceil(10);
    ensure(optimal >= needed, || format!("optimal p in {optimal}/{small_runs} small runs (need {needed})"))?;
    Ok(format!("{cases} fuzzed instances feasible; optimal p in {optimal}/{small_runs} exhaustive runs"))
}

fn random_columns<R: Rng>(rng: &mut R, rows: usize, features: usize, levels: i32) -> Vec<Vec<f64>> {
    (0..features).map(|_| (0..rows).map(|_| rng.gen_range(0..levels) as f64).collect()).collect()
}

pub fn solvers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let mut ols_err: f64 = 0.0;
    for _ in 0..5 {
        let (n, p) = (200, 10);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 + (0..p).map(|j| (j as f64 - 4.0) * cols[j][i]).sum::<f64>() + rng.gen_range(-1.0..1.0))
            .collect();
        let fit = ols_fit(&cols, &y).map_err(|e| e.to_string())?;
        let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        let b = DVector::from_column_slice(&y);
        let beta = (a.transpose() * &a).cholesky().ok_or("singular normal equations")?.solve(&(a.transpose() * b));
        ols_err = ols_err.max((fit.intercept - beta[0]).abs());
        for j in 0..p {
            ols_err = ols_err.max((fit.coef[j] - beta[j + 1]).abs());
        }
    }
    ensure(ols_err <= 1e-8, || format!("OLS differs from the normal equations by {ols_err:e}"))?;

    let cols: Vec<Vec<f64>> = (0..6).map(|_| (0..600).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
    let y: Vec<f64> = (0..600).map(|i| (cols[0][i] * cols[1][i]).sqrt() + rng.gen_range(0.0..2.0)).collect();
    let g = gbdt_fit(&cols, &y, &GbdtParams { trees: 300, subsample: 1.0, ..Default::default() })
        .map_err(|e| e.to_string())?;
    ensure(g.train_loss.len() == 301, || "train_loss should have 301 entries".into())?;
    for (s, w) in g.train_loss.windows(2).enumerate() {
        ensure(w[1] <= w[0], || format!("training MSE rose at stage {}: {} → {}", s + 1, w[0], w[1]))?;
    }

    let mut compared = 0;
    for case in 0..20 {
        let rows = rng.gen_range(20..200);
        let (features, levels) = (rng.gen_range(1..5), rng.gen_range(2..15));
        let cols = random_columns(&mut rng, rows, features, levels);
        let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(0..30) as f64).collect();
        let min_leaf = rng.gen_range(1..5);
        let depth = if case % 2 == 0 { None } else { Some(rng.gen_range(1..6)) };
        let forest = rf_fit(
            &cols,
            &y,
            &ForestParams { trees: 1, depth, min_leaf, feature_frac: 1.0, bootstrap: false, seed: case },
        )
        .map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..rows).collect();
        let cart = Cart::fit(&cols, &y, &all, 0, depth, min_leaf as usize);
        let probes: Vec<Vec<f64>> = (0..50).map(|_| cols.iter().map(|_| rng.gen_range(-1.0..16.0)).collect()).collect();
        for r in 0..rows {
            let row: Vec<f64> = cols.iter().map(|c| c[r]).collect();
            let (a, b) = (forest.predict(&cols, r), cart.predict(&row));
            ensure(a == b, || format!("case {case}: row {r} forest {a} vs CART {b}"))?;
            compared += 1;
        }
        for probe in &probes {
            let as_cols: Vec<Vec<f64>> = probe.iter().map(|&v| vec![v]).collect();
            let (a, b) = (forest.predict(&as_cols, 0), cart.predict(probe));
            ensure(a == b, || format!("case {case}: probe {probe:?} forest {a} vs CART {b}"))?;
            compared += 1;
        }
        // The bare tree learner must agree with the forest wrapper as well.
        let tree = fit_tree(
            &BinnedMatrix::new(&cols),
            &y,
            &vec![1; rows],
            &TreeParams { max_depth: depth, min_leaf, feature_frac: 1.0, scale: 1.0 },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .tree;
        ensure(tree == forest.trees[0], || format!("case {case}: fit_tree and rf_fit disagree"))?;
    }
    Ok(format!("OLS max error {ols_err:.1e}; GBDT loss monotone over 300 stages; single-tree RF = CART on {compared} predictions"))
}

pub fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut wilcoxon_cases = 0;
    for case in 0..600 {
        let n = rng.gen_range(1..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3..=3) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3..=3) as f64).collect();
        match (wilcoxon_signed_rank(&x, &y), wilcoxon_enumeration(&x, &y)) {
            (Err(_), None) => {}
            (Ok(w), Some((stat, p))) => {
                ensure(w.exact, || format!("case {case}: expected the exact test"))?;
                ensure(w.statistic == stat && (w.p_value - p).abs() <= 1e-12, || {
                    format!("case {case}: W = {}, p = {} vs oracle W = {stat}, p = {p}", w.statistic, w.p_value)
                })?;
                wilcoxon_cases += 1;
            }
            (got, want) => return Err(format!("case {case}: library {got:?}, oracle {want:?}")),
        }
    }

    for case in 0..300 {
        let n = rng.gen_range(0..60);
        let levels = rng.gen_range(2..20);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels) as f64 + if case % 3 == 0 { x.len() as f64 } else { 0.0 })
            .collect();
        let (got, want) = (kendall_tau_b(&x, &y), kendall_pairs(&x, &y));
        let same = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        ensure(same, || format!("case {case}: Kendall {got:?} vs pair counting {want:?}"))?;
    }

    for case in 0..500 {
        let n = rng.gen_range(1..300);
        let v: Vec<f64> = (0..n)
            .map(|_| if case % 2 == 0 { rng.gen_range(0..25) as f64 } else { rng.gen_range(-50.0..50.0) })
            .collect();
        let (lo, hi) = iqr_bounds(&v).ok_or("no bounds")?;
        let (q1, q3) = (quantile_oracle(&v, 0.25), quantile_oracle(&v, 0.75));
        let (want_lo, want_hi) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
        ensure((lo - want_lo).abs() <= 1e-12 && (hi - want_hi).abs() <= 1e-12, || {
            format!("case {case}: bounds ({lo}, {hi}) vs order statistics ({want_lo}, {want_hi})")
        })?;
    }

    for case in 0..1000 {
        let n = rng.gen_range(1..100);
        let y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-20.0..60.0) }).collect();
        let f: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-20.0..60.0) }).collect();
        let a = metrics(&y, &f).map_err(|e| e.to_string())?;
        let b = metrics(&f, &y).map_err(|e| e.to_string())?;
        ensure((a.smape - b.smape).abs() <= 1e-9, || {
            format!("case {case}: sMAPE not symmetric ({} vs {})", a.smape, b.smape)
        })?;
        ensure(a.rmse >= a.mae - 1e-12, || format!("case {case}: RMSE {} < MAE {}", a.rmse, a.mae))?;
    }
    Ok(format!("{wilcoxon_cases} exact Wilcoxon cases, 300 Kendall, 500 quartile, 1000 metric vectors"))
}

pub fn dataset(city: &ridership::synth::SyntheticCity) -> Dataset {
    Dataset {
        apc: city.apc.clone(),
        weather: city.weather.clone(),
        stops: city.stops.clone(),
        facilities: city.facilities.clone(),
        holidays: city.holidays.clone(),
    }
}

pub fn fast_config(data_dir: &Path, out: &Path, trees: usize) -> RunConfig {
    let mut cfg = RunConfig::for_data_dir(data_dir);
    cfg.output_dir = out.to_path_buf();
    cfg.set("trees", &trees.to_string()).unwrap();
    cfg.set("depth", "5").unwrap();
    cfg.set("k_grid", "2..10:1").unwrap();
    cfg
}

pub struct EndToEnd {
    pub cleaning: Outcome,
    pub regions: Outcome,
    pub beats_baseline: Outcome,
    pub single_region: Outcome,
    pub regimes: Outcome,
}

/// The full pipeline on the 120-stop, two-cluster, 60-day city.
pub fn end_to_end(work: &Path) -> Result<EndToEnd, String> {
    let spec = SynthSpec { n_stops: 120, n_routes: 4, days: 60, seed: 7, ..Default::default() };
    let city = generate_synthetic_city(&spec).map_err(|e| e.to_string())?;
    let data_dir = work.join("city");
    city.write(&data_dir).map_err(|e| e.to_string())?;
    let mut cfg = fast_config(&data_dir, &work.join("report"), 80);
    cfg.set("regime", "both").unwrap();
    cfg.set("importance_repeats", "0").unwrap();
    let report = run_pipeline(&cfg).map_err(|e| e.to_string())?;

    let removed: BTreeSet<&str> = report.cleaning.iter().map(|c| c.trip_key.as_str()).collect();
    let injected: BTreeSet<&str> = city.truth.injected.iter().map(|r| r.trip_key.as_str()).collect();
    let cleaning = if removed == injected {
        Ok(format!("removed exactly the {} injected rides", injected.len()))
    } else {
        Err(format!(
            "{} removed, {} injected; {} clean rides removed, {} injected rides kept",
            removed.len(),
            injected.len(),
            removed.difference(&injected).count(),
            injected.difference(&removed).count()
        ))
    };

    let truth: BTreeMap<&str, usize> = city.truth.clusters.iter().map(|c| (c.stop_code.as_str(), c.cluster)).collect();
    let aris: Vec<f64> = report
        .splits
        .iter()
        .map(|s| {
            let (a, b): (Vec<usize>, Vec<usize>) =
                s.region_of.iter().map(|(stop, &r)| (r, truth[stop.as_str()])).unzip();
            adjusted_rand_index(&a, &b)
        })
        .collect();
    let min_ari = aris.iter().copied().fold(f64::INFINITY, f64::min);
    let regions = if min_ari >= 0.9 {
        Ok(format!("ARI ≥ {min_ari:.3} on all {} splits", aris.len()))
    } else {
        Err(format!("ARI per split {aris:?}"))
    };

    let mae = |split: &str, regime: &str, fw: &str| {
        report.metrics.iter().find(|m| m.split == split && m.regime == regime && m.framework == fw).map(|m| m.mae)
    };
    let mut worst_gain = f64::INFINITY;
    let mut beats = Ok(());
    for s in &report.splits {
        for regime in ["with_id", "without_id"] {
            let base = mae(&s.split, regime, "train_mean").unwrap_or(f64::NAN);
            for fw in ["global", "polygon"] {
                let m = mae(&s.split, regime, fw).unwrap_or(f64::NAN);
                let gain = 1.0 - m / base;
                worst_gain = worst_gain.min(gain);
                if !(gain >= 0.3) && beats.is_ok() {
                    beats = Err(format!("{} {regime} {fw}: MAE {m:.3} vs train mean {base:.3}", s.split));
                }
            }
        }
    }
    let beats_baseline = beats.map(|_| format!("worst improvement over the train mean {:.1}%", worst_gain * 100.0));

    let mean_mae = |regime: &str| {
        let v: Vec<f64> = report.splits.iter().filter_map(|s| mae(&s.split, regime, "global")).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (with_id, without_id) = (mean_mae("with_id"), mean_mae("without_id"));
    let rel = (with_id - without_id).abs() / with_id.min(without_id);
    let regimes = if rel < 0.2 {
        Ok(format!("mean MAE with_id {with_id:.3}, without_id {without_id:.3} ({:.1}% apart)", rel * 100.0))
    } else {
        Err(format!("mean MAE with_id {with_id:.3}, without_id {without_id:.3} ({:.1}% apart)", rel * 100.0))
    };

    let single_region = single_region_matches_global(&cfg, &city);
    Ok(EndToEnd { cleaning, regions, beats_baseline, single_region, regimes })
}

/// Polygon ensemble over a one-region partition vs an independently trained
/// global model on the last split.
fn single_region_matches_global(cfg: &RunConfig, city: &ridership::synth::SyntheticCity) -> Outcome {
    let (kept, _) = plausibility_filters(&city.apc, cfg.delta);
    let inputs = Inputs::new(dataset(city), cfg.radius_m);
    let plans = plan_splits(cfg, &kept).map_err(|e| e.to_string())?;
    let split = split_data(&kept, plans.last().unwrap()).map_err(|e| e.to_string())?;
    let frames = split_frames(cfg, &inputs, &split.train, &split.test);
    let train = regime_frame(&frames.train, Regime::WithId);
    let test = regime_frame(&frames.test, Regime::WithId);
    let params = cfg.model_params();
    let one: BTreeMap<String, usize> = city.stops.iter().map(|s| (s.stop_code.clone(), 0)).collect();
    let ensemble = train_polygonwise(&train, &one, &params, cfg.min_region_rows).map_err(|e| e.to_string())?;
    let global = train_global(&train, &params).map_err(|e| e.to_string())?;
    let a = ensemble.predict(&test).map_err(|e| e.to_string())?;
    let b = global.predict(&test).map_err(|e| e.to_string())?;
    let differing = a.iter().zip(&b).filter(|(x, y)| x.to_bits() != y.to_bits()).count();
    ensure(differing == 0, || format!("{differing} of {} predictions differ", a.len()))?;
    Ok(format!("{} predictions bit-identical", a.len()))
}

/// Route-level demand aggregates: the features that carry the planted
/// per-route multiplier.
pub fn route_demand_features() -> Vec<&'static str> {
    ROUTE_FEATURES.iter().copied().filter(|f| ["board", "alight", "cont"].iter().any(|q| f.contains(q))).collect()
}

/// Top permutation-importance feature on the last split of the end-to-end
/// city (120 stops, 60 days) for each seed, without identifier columns.
pub fn attribution(seeds: std::ops::RangeInclusive<u64>) -> Outcome {
    let family = route_demand_features();
    let mut tops = Vec::new();
    for seed in seeds {
        let city =
            generate_synthetic_city(&SynthSpec { n_stops: 120, n_routes: 4, days: 60, seed, ..Default::default() })
                .map_err(|e| e.to_string())?;
        let mut cfg = RunConfig::default();
        cfg.set("trees", "60").unwrap();
        cfg.set("depth", "5").unwrap();
        cfg.seed = seed;
        let (kept, _) = plausibility_filters(&city.apc, cfg.delta);
        let inputs = Inputs::new(dataset(&city), cfg.radius_m);
        let plans = plan_splits(&cfg, &kept).map_err(|e| e.to_string())?;
        let split = split_data(&kept, plans.last().unwrap()).map_err(|e| e.to_string())?;
        let frames = split_frames(&cfg, &inputs, &split.train, &split.test);
        let train = regime_frame(&frames.train, Regime::WithoutId);
        let test = regime_frame(&frames.test, Regime::WithoutId);
        let model = train_global(&train, &cfg.model_params()).map_err(|e| e.to_string())?;
        let rep = permutation_importance(&model, &test, 2, seed).map_err(|e| e.to_string())?;
        tops.push(rep.top().map(|f| f.feature.clone()).unwrap_or_default());
    }
    let hits = tops.iter().filter(|t| family.contains(&t.as_str())).count();
    let needed = (tops.len() * 9).div_ceil(10);
    let summary = format!("route demand ranked #1 in {hits}/{} seeds (tops: {})", tops.len(), tops.join(", "));
    if hits >= needed {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.insert(path.strip_prefix(root).unwrap().display().to_string(), fs::read(&path)?);
        }
    }
    Ok(())
}

pub fn determinism(work: &Path) -> Outcome {
    let city =
        generate_synthetic_city(&SynthSpec { n_stops: 40, n_routes: 4, days: 31, seed: 3, ..Default::default() })
            .map_err(|e| e.to_string())?;
    let data_dir = work.join("city");
    city.write(&data_dir).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = work.join(run);
        let mut cfg = fast_config(&data_dir, &out, 30);
        cfg.set("regime", "both").unwrap();
        cfg.set("importance_repeats", "1").unwrap();
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let mut files = BTreeMap::new();
        collect_files(&out, &out, &mut files).map_err(|e| e.to_string())?;
        trees.push(files);
    }
    let (a, b) = (&trees[0], &trees[1]);
    ensure(a.keys().eq(b.keys()), || "the two runs wrote different file sets".into())?;
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    ensure(differing.is_empty(), || format!("files differ: {differing:?}"))?;
    Ok(format!("{} files byte-identical across two runs", a.len()))
}
