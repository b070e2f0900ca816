//! Controller comparison grid: configurations × controllers × replications.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use log::{info, warn};
use pmn_core::simulator::artifacts;
use pmn_core::simulator::metrics::{window_decision_stats, window_mean_cost, ARTIFACT_SCHEMA};
use pmn_core::{controller_by_name, generate_pc, run, ProblemConfig, CONTROLLER_NAMES};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::{load_config, SimArgs, Topology};

pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Configuration files (repeatable). When omitted, `--pcs`
    /// configurations are generated.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Number of generated configurations.
    #[arg(long, default_value_t = 4)]
    pcs: usize,
    #[command(flatten)]
    topology: Topology,
    /// Generator seed of the first configuration; the k-th uses this plus k.
    #[arg(long, default_value_t = 1)]
    config_seed: u64,
    /// Comma-separated controller names.
    #[arg(long, value_delimiter = ',', default_value = "rhc,bdc,mtsp,rhc-p,bdc-p")]
    controller: Vec<String>,
    /// Replications per cell.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Simulation seed of the first replication; the r-th uses this plus r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "compare")]
    out: PathBuf,
    /// Start of a steady-state window [start, T] over which per-decision
    /// cost and J_t are also averaged.
    #[arg(long)]
    steady_from: Option<f64>,
    /// Also write every run's artifacts under `<out>/runs`.
    #[arg(long)]
    artifacts: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Clone, Serialize)]
struct RunMetrics {
    #[serde(rename = "J_T")]
    j_t: f64,
    #[serde(rename = "Jhat_T")]
    jhat_t: f64,
    #[serde(rename = "J_W")]
    j_w: f64,
    #[serde(rename = "J_C")]
    j_c: Option<f64>,
    decisions: usize,
    calls_per_decision: f64,
    mean_solver_wall_us: f64,
    steady_j: Option<f64>,
    steady_calls_per_decision: Option<f64>,
    steady_wall_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Stat {
    mean: f64,
    std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std })
    }
}

#[derive(Debug, Serialize)]
struct CellStats {
    #[serde(rename = "J_T")]
    j_t: Option<Stat>,
    #[serde(rename = "Jhat_T")]
    jhat_t: Option<Stat>,
    #[serde(rename = "J_W")]
    j_w: Option<Stat>,
    #[serde(rename = "J_C")]
    j_c: Option<Stat>,
    calls_per_decision: Option<Stat>,
    mean_solver_wall_us: Option<Stat>,
    #[serde(rename = "steady_J")]
    steady_j: Option<Stat>,
    steady_calls_per_decision: Option<Stat>,
    steady_wall_us: Option<Stat>,
}

impl CellStats {
    fn from_runs(runs: &[&RunMetrics]) -> CellStats {
        let pick = |f: &dyn Fn(&RunMetrics) -> Option<f64>| Stat::of(&runs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        CellStats {
            j_t: pick(&|r| Some(r.j_t)),
            jhat_t: pick(&|r| Some(r.jhat_t)),
            j_w: pick(&|r| Some(r.j_w)),
            j_c: pick(&|r| r.j_c),
            calls_per_decision: pick(&|r| Some(r.calls_per_decision)),
            mean_solver_wall_us: pick(&|r| Some(r.mean_solver_wall_us)),
            steady_j: pick(&|r| r.steady_j),
            steady_calls_per_decision: pick(&|r| r.steady_calls_per_decision),
            steady_wall_us: pick(&|r| r.steady_wall_us),
        }
    }

    /// Averages of cell means, mirroring an "Average" table row.
    fn average(cells: &[&CellStats]) -> CellStats {
        let pick = |f: &dyn Fn(&CellStats) -> Option<Stat>| {
            Stat::of(&cells.iter().filter_map(|c| f(c).map(|s| s.mean)).collect::<Vec<_>>())
        };
        CellStats {
            j_t: pick(&|c| c.j_t),
            jhat_t: pick(&|c| c.jhat_t),
            j_w: pick(&|c| c.j_w),
            j_c: pick(&|c| c.j_c),
            calls_per_decision: pick(&|c| c.calls_per_decision),
            mean_solver_wall_us: pick(&|c| c.mean_solver_wall_us),
            steady_j: pick(&|c| c.steady_j),
            steady_calls_per_decision: pick(&|c| c.steady_calls_per_decision),
            steady_wall_us: pick(&|c| c.steady_wall_us),
        }
    }

    fn columns(&self) -> [Option<Stat>; 9] {
        [
            self.j_t,
            self.jhat_t,
            self.j_w,
            self.j_c,
            self.calls_per_decision,
            self.mean_solver_wall_us,
            self.steady_j,
            self.steady_calls_per_decision,
            self.steady_wall_us,
        ]
    }
}

const STAT_COLUMNS: [&str; 9] = [
    "J_T",
    "Jhat_T",
    "J_W",
    "J_C",
    "calls_per_decision",
    "mean_solver_wall_us",
    "steady_J",
    "steady_calls_per_decision",
    "steady_wall_us",
];

#[derive(Debug, Serialize)]
struct Cell {
    config: String,
    controller: String,
    runs: usize,
    failures: Vec<String>,
    #[serde(flatten)]
    stats: CellStats,
}

#[derive(Debug, Serialize)]
struct Average {
    controller: String,
    #[serde(flatten)]
    stats: CellStats,
}

#[derive(Debug, Serialize)]
struct Comparison {
    schema: u32,
    controllers: Vec<String>,
    configs: Vec<String>,
    seeds: Vec<u64>,
    #[serde(rename = "T")]
    horizon: Vec<f64>,
    cells: Vec<Cell>,
    averages: Vec<Average>,
}

fn configs(args: &CompareArgs) -> Result<Vec<(String, ProblemConfig)>, CliError> {
    let mut out = Vec::new();
    if args.configs.is_empty() {
        let t = &args.topology;
        for k in 0..args.pcs {
            let seed = args.config_seed + k as u64;
            let config = generate_pc(t.targets, t.agents, t.sigma, seed)
                .map_err(|e| CliError::Config(format!("generation with seed {seed} failed: {e}")))?;
            out.push((format!("pc-{seed}"), config));
        }
    } else {
        for path in &args.configs {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string());
            out.push((name, load_config(path)?));
        }
    }
    for (_, c) in &mut out {
        args.sim.apply(c);
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if out.is_empty() {
        return Err(CliError::Config("no configurations to compare".into()));
    }
    Ok(out)
}

fn fmt_stat(s: Option<Stat>) -> (String, String) {
    match s {
        Some(s) => (s.mean.to_string(), s.std.to_string()),
        None => (String::new(), String::new()),
    }
}

fn write_csv(path: &PathBuf, cmp: &Comparison) -> Result<(), CliError> {
    let mut file = fs::File::create(path)?;
    use std::io::Write;
    writeln!(file, "# schema: {ARTIFACT_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["config".to_string(), "controller".to_string(), "runs".to_string(), "failures".to_string()];
    for c in STAT_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    w.write_record(&header).map_err(|e| CliError::Other(e.into()))?;
    let rows = cmp
        .cells
        .iter()
        .map(|c| (c.config.clone(), c.controller.clone(), c.runs, c.failures.len(), &c.stats))
        .chain(cmp.averages.iter().map(|a| ("Average".to_string(), a.controller.clone(), 0, 0, &a.stats)));
    for (config, controller, runs, failures, stats) in rows {
        let mut row = vec![config, controller, runs.to_string(), failures.to_string()];
        for s in stats.columns() {
            let (m, sd) = fmt_stat(s);
            row.push(m);
            row.push(sd);
        }
        w.write_record(&row).map_err(|e| CliError::Other(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn print_table(cmp: &Comparison) {
    let width = 18;
    print!("{:<12}", "J_T");
    for c in &cmp.controllers {
        print!(" {c:>width$}");
    }
    println!();
    let cell = |config: &str, controller: &str| cmp.cells.iter().find(|c| c.config == config && c.controller == controller);
    for config in &cmp.configs {
        print!("{config:<12}");
        for controller in &cmp.controllers {
            let text = match cell(config, controller).and_then(|c| c.stats.j_t) {
                Some(s) if cmp.seeds.len() > 1 => format!("{:.2}±{:.2}", s.mean, s.std),
                Some(s) => format!("{:.2}", s.mean),
                None => "failed".into(),
            };
            print!(" {text:>width$}");
        }
        println!();
    }
    print!("{:<12}", "Average:");
    for a in &cmp.averages {
        let text = a.stats.j_t.map(|s| format!("{:.2}", s.mean)).unwrap_or_else(|| "-".into());
        print!(" {text:>width$}");
    }
    println!();
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    args.sim.validate()?;
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    let controllers: Vec<String> = args.controller.iter().map(|c| c.trim().to_ascii_lowercase()).collect();
    if let Some(bad) = controllers.iter().find(|c| !CONTROLLER_NAMES.contains(&c.as_str())) {
        return Err(CliError::Config(format!("unknown controller `{bad}`; expected one of {CONTROLLER_NAMES:?}")));
    }
    let configs = configs(&args)?;
    let seeds: Vec<u64> = (0..args.reps as u64).map(|r| args.seed + r).collect();
    fs::create_dir_all(&args.out)?;

    let jobs: Vec<(usize, usize, u64)> = (0..configs.len())
        .flat_map(|k| (0..controllers.len()).flat_map(move |c| (0..args.reps as u64).map(move |r| (k, c, r))))
        .collect();
    let execute = || -> Vec<Result<RunMetrics, String>> {
        jobs.par_iter().map(|&(k, c, r)| run_job(&args, &configs[k], &controllers[c], seeds[r as usize])).collect()
    };
    let results = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Other(e.into()))?
            .install(execute),
        None => execute(),
    };

    let mut cells = Vec::new();
    let mut failed = 0;
    for (k, (name, _)) in configs.iter().enumerate() {
        for (c, controller) in controllers.iter().enumerate() {
            let mut ok = Vec::new();
            let mut failures = Vec::new();
            for (job, res) in jobs.iter().zip(&results) {
                if job.0 == k && job.1 == c {
                    match res {
                        Ok(m) => ok.push(m),
                        Err(e) => failures.push(e.clone()),
                    }
                }
            }
            failed += failures.len();
            cells.push(Cell { config: name.clone(), controller: controller.clone(), runs: ok.len(), failures, stats: CellStats::from_runs(&ok) });
        }
    }
    let averages = controllers
        .iter()
        .map(|controller| {
            let mine: Vec<&CellStats> = cells.iter().filter(|c| &c.controller == controller).map(|c| &c.stats).collect();
            Average { controller: controller.clone(), stats: CellStats::average(&mine) }
        })
        .collect();
    let comparison = Comparison {
        schema: ARTIFACT_SCHEMA,
        controllers: controllers.clone(),
        configs: configs.iter().map(|(n, _)| n.clone()).collect(),
        seeds,
        horizon: configs.iter().map(|(_, c)| c.horizon_t).collect(),
        cells,
        averages,
    };
    let json = serde_json::to_string_pretty(&comparison).map_err(|e| CliError::Other(e.into()))?;
    fs::write(args.out.join(COMPARISON_JSON), json + "\n")?;
    write_csv(&args.out.join(COMPARISON_CSV), &comparison)?;
    print_table(&comparison);
    info!("wrote {}", args.out.display());
    if failed > 0 {
        return Err(CliError::Partial(format!("{failed} of {} runs failed; see {}", jobs.len(), args.out.join(COMPARISON_JSON).display())));
    }
    Ok(())
}

fn run_job(args: &CompareArgs, (name, config): &(String, ProblemConfig), controller: &str, seed: u64) -> Result<RunMetrics, String> {
    let describe = |e: &dyn std::fmt::Display| format!("{name}/{controller}/seed {seed}: {e}");
    let mut ctl = controller_by_name(controller, config, &args.sim.controller_options(seed)).map_err(|e| describe(&e))?;
    let options = args.sim.sim_options(seed);
    let out = run(config, ctl.as_mut(), &options).map_err(|e| {
        let msg = describe(&e);
        warn!("{msg}");
        msg
    })?;
    if args.artifacts {
        let dir = args.out.join("runs").join(name).join(controller).join(format!("seed-{seed}"));
        artifacts::write_run(&dir, &out, options.window, args.sim.timing).map_err(|e| describe(&e))?;
    }
    let s = &out.summary;
    let wall = |w: f64| if args.sim.timing { w } else { 0.0 };
    let steady = args.steady_from.map(|t0| {
        let j = window_mean_cost(&out.samples, t0, out.horizon);
        let stats = window_decision_stats(&out.decisions, t0, out.horizon);
        (j, stats.map(|s| s.0), stats.map(|s| wall(s.1)))
    });
    Ok(RunMetrics {
        j_t: s.j_t,
        jhat_t: s.jhat_t,
        j_w: s.j_w,
        j_c: s.j_c,
        decisions: s.decisions,
        calls_per_decision: if s.decisions > 0 { s.solver_calls as f64 / s.decisions as f64 } else { 0.0 },
        mean_solver_wall_us: wall(s.mean_solver_wall_us),
        steady_j: steady.and_then(|x| x.0),
        steady_calls_per_decision: steady.and_then(|x| x.1),
        steady_wall_us: steady.and_then(|x| x.2),
    })
}
