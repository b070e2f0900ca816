//! `pmn`: generate configurations, run single simulations and controller
//! comparisons, and write the CSV/JSON artifacts consumed by the plotting
//! scripts.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod compare;
mod error;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use pmn_core::network::{PlanningHorizon, DEFAULT_H, DEFAULT_T};
use pmn_core::simulator::{artifacts, SimError, TrackingOptions};
use pmn_core::{controller_by_name, generate_pc, run, ControllerOptions, ProblemConfig, SimOptions};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "pmn", version, about = "Persistent monitoring of target networks by mobile agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a random connected configuration and write it as JSON.
    Generate(GenerateArgs),
    /// Simulate one controller on one configuration.
    Run(RunArgs),
    /// Run a controller grid over configurations and replications.
    Compare(compare::CompareArgs),
}

#[derive(Args, Debug, Clone)]
struct Topology {
    /// Number of targets.
    #[arg(long, default_value_t = 7)]
    targets: usize,
    /// Number of agents.
    #[arg(long, default_value_t = 2)]
    agents: usize,
    /// Targets closer than this are joined by an edge.
    #[arg(long, default_value_t = 0.7)]
    sigma: f64,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    topology: Topology,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mission length.
    #[arg(long = "T", default_value_t = DEFAULT_T)]
    horizon: f64,
    /// Planning horizon: a number or `remaining`.
    #[arg(long = "H", default_value_t = PlanningHorizon::Fixed(DEFAULT_H))]
    planning: PlanningHorizon,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Options shared by `run` and `compare`.
#[derive(Args, Debug, Clone)]
struct SimArgs {
    /// Override the configuration's mission length.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Override the planning horizon (a number or `remaining`).
    #[arg(long = "H")]
    planning: Option<PlanningHorizon>,
    /// Integrate target states and estimates and report J_C.
    #[arg(long)]
    tracking: bool,
    /// Feed the true state to the tracking control law.
    #[arg(long, requires = "tracking")]
    oracle: bool,
    /// Step of the state/estimator integration.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Samples collected before a classifier is first trained.
    #[arg(long, default_value_t = 25)]
    dataset_size: usize,
    /// Mismatch threshold of the gated learning controller.
    #[arg(long, default_value_t = 0.25)]
    al_threshold: f64,
    /// Spacing of the metrics series.
    #[arg(long, default_value_t = 0.1)]
    sample_dt: f64,
    /// Width of the forward window for instantaneous costs.
    #[arg(long, default_value_t = 0.5)]
    window: f64,
    /// Write measured controller wall times instead of zeros.
    #[arg(long)]
    timing: bool,
}

impl SimArgs {
    fn apply(&self, config: &mut ProblemConfig) {
        if let Some(t) = self.horizon {
            config.horizon_t = t;
        }
        if let Some(h) = self.planning {
            config.planning_h = h;
        }
    }

    fn sim_options(&self, seed: u64) -> SimOptions {
        let tracking = self.tracking.then(|| TrackingOptions { dt: self.dt, oracle: self.oracle, ..TrackingOptions::default() });
        SimOptions { sample_dt: self.sample_dt, window: self.window, seed: Some(seed), tracking, check_invariants: true }
    }

    fn controller_options(&self, seed: u64) -> ControllerOptions {
        let mut o = ControllerOptions { seed, ..ControllerOptions::default() };
        o.learning.dataset_size = self.dataset_size;
        o.learning.al_threshold = self.al_threshold;
        o
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.dt > 0.0) || !(self.sample_dt > 0.0) || !(self.window > 0.0) {
            return Err(CliError::Config("--dt, --sample-dt and --window must be positive".into()));
        }
        if self.dataset_size == 0 {
            return Err(CliError::Config("--dataset-size must be at least 1".into()));
        }
        if !(self.al_threshold >= 0.0 && self.al_threshold <= 1.0) {
            return Err(CliError::Config("--al-threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file written by `generate`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "rhc")]
    controller: String,
    /// Seed for noise paths and controller randomness; defaults to the
    /// configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

pub(crate) fn load_config(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ProblemConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let t = &args.topology;
    let mut config = generate_pc(t.targets, t.agents, t.sigma, args.seed)
        .map_err(|e| CliError::Config(format!("generation with seed {} failed: {e}", args.seed)))?;
    config.horizon_t = args.horizon;
    config.planning_h = args.planning;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let text = config.to_json();
    match args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, text + "\n")?;
            info!("wrote {}", path.display());
        }
        None => writeln!(io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn run_one(args: RunArgs) -> Result<(), CliError> {
    args.sim.validate()?;
    let mut config = load_config(&args.config)?;
    args.sim.apply(&mut config);
    let seed = args.seed.unwrap_or(config.rng_seed);
    let mut controller = controller_by_name(&args.controller, &config, &args.sim.controller_options(seed))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let options = args.sim.sim_options(seed);
    let out = match run(&config, controller.as_mut(), &options) {
        Ok(out) => out,
        Err(e @ SimError::Invariant { .. }) => {
            let dump = args.out.join("failure-events.csv");
            fs::create_dir_all(&args.out)?;
            artifacts::write_event_log(fs::File::create(&dump)?, e.event_log(), args.sim.timing)?;
            return Err(CliError::Invariant(format!("{e}; event log written to {}", dump.display())));
        }
        Err(SimError::Config(msg)) => return Err(CliError::Config(msg)),
        Err(e) => return Err(CliError::Other(e.into())),
    };
    artifacts::write_run(&args.out, &out, options.window, args.sim.timing)?;
    let s = &out.summary;
    println!(
        "{}: J_T {:.4}  Jhat_T {:.4}  J_W {:.4}{}  decisions {}  solver calls {}  -> {}",
        s.controller,
        s.j_t,
        s.jhat_t,
        s.j_w,
        s.j_c.map(|j| format!("  J_C {j:.4}")).unwrap_or_default(),
        s.decisions,
        s.solver_calls,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run_one(a),
        Command::Compare(a) => compare::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
