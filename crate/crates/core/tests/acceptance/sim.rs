//! Simulation-level criteria: protocol invariants, controller trends,
//! tracking, learning acceleration and determinism.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use pmn_core::simulator::artifacts::{summary_json, write_event_log, write_metrics};
use pmn_core::simulator::metrics::{window_decision_stats, window_mean_cost};
use pmn_core::simulator::{SimOutput, TrackingOptions};
use pmn_core::{controller_by_name, generate_pc, run, ControllerOptions, ProblemConfig, SimOptions, Summary};

use super::{check, Outcome};

const TREND_SEEDS: std::ops::Range<u64> = 2001..2011;
const TREND_CONTROLLERS: [&str; 5] = ["rhc", "bdc", "mtsp", "rhc-p", "bdc-p"];

fn trend_config(seed: u64) -> ProblemConfig {
    generate_pc(7, 2, 0.7, seed).expect("generator succeeds for the trend seeds")
}

fn simulate(config: &ProblemConfig, name: &str, options: &SimOptions, ctl: &ControllerOptions) -> Result<SimOutput, String> {
    let mut controller = controller_by_name(name, config, ctl).map_err(|e| format!("{name}: {e}"))?;
    run(config, controller.as_mut(), options).map_err(|e| format!("{name} on seed {}: {e}", config.rng_seed))
}

/// Runs `jobs` on scoped threads, preserving order.
fn parallel<T: Send>(jobs: Vec<Box<dyn FnOnce() -> T + Send + '_>>) -> Vec<T> {
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs.into_iter().map(|job| s.spawn(job)).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

type Grid = BTreeMap<(u64, &'static str), Result<Summary, String>>;

/// Summaries of every trend controller on every trend configuration, with
/// the tracking study enabled. Computed once and shared by the criteria.
fn trend_grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let options = SimOptions { tracking: Some(TrackingOptions::default()), ..SimOptions::default() };
        let ctl = ControllerOptions::default();
        let jobs: Vec<Box<dyn FnOnce() -> _ + Send>> = TREND_SEEDS
            .map(|seed| {
                let (options, ctl) = (options.clone(), ctl.clone());
                Box::new(move || {
                    let config = trend_config(seed);
                    TREND_CONTROLLERS
                        .iter()
                        .map(|&name| ((seed, name), simulate(&config, name, &options, &ctl).map(|o| o.summary)))
                        .collect::<Vec<_>>()
                }) as Box<dyn FnOnce() -> _ + Send>
            })
            .collect();
        parallel(jobs).into_iter().flatten().collect()
    })
}

fn grid_summary(seed: u64, name: &'static str) -> Result<&'static Summary, String> {
    trend_grid()[&(seed, name)].as_ref().map_err(|e| e.clone())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Extra shapes beyond the trend grid: denser fleets, sparse graphs and
/// the learning controllers.
fn sharing_runs() -> &'static Vec<Result<Summary, String>> {
    static RUNS: OnceLock<Vec<Result<Summary, String>>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let shapes = [(7, 2, 0.7), (10, 4, 0.5), (12, 3, 0.45), (5, 5, 0.9), (8, 1, 0.6)];
        let jobs: Vec<Box<dyn FnOnce() -> _ + Send>> = shapes
            .iter()
            .enumerate()
            .flat_map(|(k, &(m, n, sigma))| {
                (0..3u64).map(move |rep| {
                    Box::new(move || {
                        let seed = 3000 + 10 * k as u64 + rep;
                        let config = generate_pc(m, n, sigma, seed).map_err(|e| e.to_string())?;
                        let mut out = Vec::new();
                        for name in pmn_core::CONTROLLER_NAMES {
                            out.push(simulate(&config, name, &SimOptions::default(), &ControllerOptions::default())?.summary);
                        }
                        Ok(out)
                    }) as Box<dyn FnOnce() -> Result<Vec<Summary>, String> + Send>
                })
            })
            .collect();
        parallel(jobs)
            .into_iter()
            .flat_map(|r| match r {
                Ok(v) => v.into_iter().map(Ok).collect::<Vec<_>>(),
                Err(e) => vec![Err(e)],
            })
            .collect()
    })
}

fn all_summaries() -> Result<Vec<&'static Summary>, String> {
    let mut out = Vec::new();
    for r in trend_grid().values().chain(sharing_runs().iter()) {
        out.push(r.as_ref().map_err(|e| e.clone())?);
    }
    Ok(out)
}

/// Smallest `2AΩ + Q` at any event boundary of any simulation in the
/// suite, and the number of runs inspected.
pub fn positivity_margin_over_runs() -> Result<(f64, usize), String> {
    let all = all_summaries()?;
    let margin = all.iter().map(|s| s.min_positivity_margin).fold(f64::INFINITY, f64::min);
    Ok((margin, all.iter().map(|s| s.events).sum()))
}

pub fn no_sharing() -> Outcome {
    let all = all_summaries()?;
    let worst = all.iter().map(|s| s.max_occupancy).max().unwrap_or(0);
    let events: usize = all.iter().map(|s| s.events).sum();
    check(worst <= 1, format!("{} runs, {events} events, max occupancy {worst}", all.len()))
}

pub fn table_one_trend() -> Outcome {
    let mut j = BTreeMap::new();
    for name in ["rhc", "bdc", "bdc-p", "mtsp", "rhc-p"] {
        let v: Result<Vec<f64>, String> = TREND_SEEDS.map(|s| grid_summary(s, name).map(|x| x.j_t)).collect();
        j.insert(name, v?);
    }
    let wins = j["rhc"].iter().zip(&j["bdc"]).filter(|(r, b)| r < b).count();
    let (rhc, bdc, bdcp) = (mean(&j["rhc"]), mean(&j["bdc"]), mean(&j["bdc-p"]));
    check(
        rhc < bdc && rhc < bdcp && wins >= 7,
        format!(
            "mean J_T rhc {rhc:.2}, bdc {bdc:.2}, bdc-p {bdcp:.2} (mtsp {:.2}, rhc-p {:.2}); rhc beats bdc on {wins}/10",
            mean(&j["mtsp"]),
            mean(&j["rhc-p"])
        ),
    )
}

/// Controllers whose rankings are compared.
const RANKED: [&str; 3] = ["rhc", "bdc", "bdc-p"];

fn ranking(values: &[(&str, f64)]) -> Vec<String> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v.into_iter().map(|(n, _)| n.to_string()).collect()
}

pub fn jhat_consistency() -> Outcome {
    let mut agree = 0;
    let mut out_of_range = 0;
    for seed in TREND_SEEDS {
        let mut by_j = Vec::new();
        let mut by_jhat = Vec::new();
        for name in TREND_CONTROLLERS {
            let s = grid_summary(seed, name)?;
            if !(-1.0..=0.0).contains(&s.jhat_t) {
                out_of_range += 1;
            }
            if RANKED.contains(&name) {
                by_j.push((name, s.j_t));
                by_jhat.push((name, s.jhat_t));
            }
        }
        if ranking(&by_j) == ranking(&by_jhat) {
            agree += 1;
        }
    }
    check(
        agree >= 8 && out_of_range == 0,
        format!("rankings of {RANKED:?} agree on {agree}/10 configs; Jhat_T outside [-1, 0]: {out_of_range}"),
    )
}

pub fn tracking_trend() -> Outcome {
    let jc = |name| -> Result<Vec<f64>, String> {
        TREND_SEEDS.map(|s| grid_summary(s, name).map(|x| x.j_c.expect("tracking enabled"))).collect()
    };
    let (rhc, bdc) = (mean(&jc("rhc")?), mean(&jc("bdc")?));
    check(rhc <= bdc, format!("mean J_C rhc {rhc:.4}, bdc {bdc:.4}"))
}

pub fn tracking_oracle() -> Outcome {
    let tracking = TrackingOptions { oracle: true, ..TrackingOptions::default() };
    let options = SimOptions { tracking: Some(tracking), ..SimOptions::default() };
    let jobs: Vec<Box<dyn FnOnce() -> Result<f64, String> + Send>> = TREND_SEEDS
        .map(|seed| {
            let options = options.clone();
            Box::new(move || {
                let out = simulate(&trend_config(seed), "rhc", &options, &ControllerOptions::default())?;
                Ok(out.summary.j_c.expect("tracking enabled"))
            }) as Box<dyn FnOnce() -> Result<f64, String> + Send>
        })
        .collect();
    let values: Result<Vec<f64>, String> = parallel(jobs).into_iter().collect();
    let values = values?;
    let worst = values.iter().copied().fold(0.0, f64::max);
    let m = mean(&values);
    check(m < 0.05, format!("oracle-state J_C mean {m:.4}, worst {worst:.4} over 10 configs"))
}

const LEARNING_SEED: u64 = 2001;
const LEARNING_T: f64 = 750.0;
const STEADY: (f64, f64) = (500.0, 750.0);

fn learning_pair(name: &str) -> Result<(SimOutput, SimOutput), String> {
    let mut config = trend_config(LEARNING_SEED);
    config.horizon_t = LEARNING_T;
    let ctl = ControllerOptions::default();
    // Sequential, so the two wall-time measurements do not compete.
    let base = simulate(&config, "rhc", &SimOptions::default(), &ctl)?;
    let learned = simulate(&config, name, &SimOptions::default(), &ctl)?;
    Ok((base, learned))
}

fn degradation(base: &SimOutput, learned: &SimOutput) -> Result<f64, String> {
    let b = window_mean_cost(&base.samples, STEADY.0, STEADY.1).ok_or("empty window")?;
    let l = window_mean_cost(&learned.samples, STEADY.0, STEADY.1).ok_or("empty window")?;
    Ok((l - b) / b)
}

pub fn learning_rhc_l() -> Outcome {
    let (base, learned) = learning_pair("rhc-l")?;
    let post: Vec<_> = learned.decisions.iter().filter(|d| d.learned).collect();
    let one_call = !post.is_empty() && post.iter().all(|d| d.solver_calls == 1);
    let (_, base_wall) = window_decision_stats(&base.decisions, STEADY.0, STEADY.1).ok_or("no decisions")?;
    let (calls, wall) = window_decision_stats(&learned.decisions, STEADY.0, STEADY.1).ok_or("no decisions")?;
    let in_window = learned.decisions.iter().filter(|d| d.time >= STEADY.0).count();
    let learned_in_window = learned.decisions.iter().filter(|d| d.time >= STEADY.0 && d.learned).count();
    let speedup = 1.0 - wall / base_wall;
    let deg = degradation(&base, &learned)?;
    check(
        one_call && speedup >= 0.5 && deg <= 0.10,
        format!(
            "{} learned decisions all single-solve: {one_call}; steady window: {learned_in_window}/{in_window} learned, {calls:.2} calls/decision, wall {wall:.1}us vs {base_wall:.1}us (-{:.1}%), J degradation {:+.2}%",
            post.len(),
            100.0 * speedup,
            100.0 * deg
        ),
    )
}

pub fn learning_rhc_le() -> Outcome {
    let (base, learned) = learning_pair("rhc-le")?;
    let deg = degradation(&base, &learned)?;
    let learned_n = learned.decisions.iter().filter(|d| d.learned).count();
    check(
        deg <= 0.01,
        format!("J degradation {:+.3}% over the steady window, {learned_n} learned decisions", 100.0 * deg),
    )
}

fn artifact_bytes(config: &ProblemConfig, name: &str) -> Result<Vec<u8>, String> {
    let options = SimOptions { tracking: Some(TrackingOptions::default()), ..SimOptions::default() };
    let out = simulate(config, name, &options, &ControllerOptions::default())?;
    let mut bytes = Vec::new();
    write_event_log(&mut bytes, &out.events, false).map_err(|e| e.to_string())?;
    write_metrics(&mut bytes, &out, options.window).map_err(|e| e.to_string())?;
    bytes.extend(summary_json(&out.summary, false).into_bytes());
    Ok(bytes)
}

pub fn determinism() -> Outcome {
    let config = trend_config(2003);
    let mut total = 0;
    let mut mismatched = Vec::new();
    for name in pmn_core::CONTROLLER_NAMES {
        let a = artifact_bytes(&config, name)?;
        let b = artifact_bytes(&config, name)?;
        total += a.len();
        if a != b {
            mismatched.push(name);
        }
    }
    check(
        mismatched.is_empty(),
        format!("{} controllers, {total} artifact bytes per pass, mismatched: {mismatched:?}", pmn_core::CONTROLLER_NAMES.len()),
    )
}
