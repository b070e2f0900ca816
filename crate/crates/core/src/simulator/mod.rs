//! Deterministic event-driven simulation.
//!
//! Covariances are exact: between consecutive events every target keeps
//! its mode, so each advances by one closed-form propagation and its area
//! is accumulated by the matching closed-form integral. Controllers are
//! invoked only at agent events; their wall time is metered but never
//! advances the simulation clock. The target states and their estimates
//! (needed only for the tracking study) are integrated afterwards along
//! the recorded covariance trajectory.

pub mod artifacts;
mod events;
pub mod metrics;
pub mod tracking;

use std::time::Instant;

use thiserror::Error;

use crate::controllers::{Action, ControlError, Controller, ControllerReport, Decision, Snapshot};
use crate::covariance::{CovarianceError, Dynamics, Mode};
use crate::network::ProblemConfig;

pub use events::{Event, EventKind, EventQueue};
pub use metrics::{Sample, Summary};
pub use tracking::{TrackingConfig, TrackingOptions};

/// Relative slack allowed when checking that covariances stay inside their
/// invariant band.
pub const BAND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Spacing of the sampled metrics series.
    pub sample_dt: f64,
    /// Width of the forward window for the instantaneous costs.
    pub window: f64,
    /// Seed for noise paths; defaults to the configuration seed.
    pub seed: Option<u64>,
    pub tracking: Option<TrackingOptions>,
    /// Abort on target sharing or covariance-band escape.
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { sample_dt: 0.1, window: 0.5, seed: None, tracking: None, check_invariants: true }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invariant violated at t = {time}: {message}")]
    Invariant { time: f64, message: String, log: Vec<EventRecord> },
    #[error("controller failed at t = {time}: {source}")]
    Control { time: f64, source: ControlError },
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SimError {
    /// Event log up to the failure, when available.
    pub fn event_log(&self) -> &[EventRecord] {
        match self {
            SimError::Invariant { log, .. } => log,
            _ => &[],
        }
    }
}

/// A maximal interval over which a target kept one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub mode: Mode,
    pub omega0: f64,
}

/// One processed event, with the decision it triggered if any.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: &'static str,
    pub agent: Option<usize>,
    pub target: Option<usize>,
    pub decision: Option<DecisionRecord>,
}

/// A controller invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub time: f64,
    pub agent: usize,
    pub target: usize,
    pub action: Action,
    pub solver_calls: usize,
    pub learned: bool,
    /// Controller wall time in microseconds.
    pub wall_us: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub controller: String,
    pub seed: u64,
    pub horizon: f64,
    pub summary: Summary,
    pub events: Vec<EventRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub samples: Vec<Sample>,
    /// Per target: `(J^A, J^I)` accumulated event by event.
    pub contributions: Vec<(f64, f64)>,
    pub segments: Vec<Vec<Segment>>,
    pub final_omega: Vec<f64>,
    /// Tracking errors at the sample times, per target.
    pub tracking_errors: Option<Vec<Vec<f64>>>,
    pub report: ControllerReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Location {
    AtTarget { target: usize, waiting: bool },
    Traveling { to: usize },
}

struct Agent {
    location: Location,
    version: u64,
}

struct World<'a> {
    config: &'a ProblemConfig,
    dynamics: Vec<Dynamics>,
    clock: f64,
    omega: Vec<f64>,
    mode: Vec<Mode>,
    covered: Vec<bool>,
    agents: Vec<Agent>,
    active_area: Vec<f64>,
    inactive_area: Vec<f64>,
    segments: Vec<Vec<Segment>>,
    segment_start: Vec<(f64, f64)>,
    worst_omega: f64,
    min_margin: f64,
    max_occupancy: usize,
    in_band: bool,
    samples: Vec<Sample>,
    sample_dt: f64,
    next_sample: usize,
    sample_count: usize,
}

impl World<'_> {
    fn target_count(&self) -> usize {
        self.omega.len()
    }

    fn sample_time(&self, k: usize) -> f64 {
        if k + 1 == self.sample_count {
            self.config.horizon_t
        } else {
            k as f64 * self.sample_dt
        }
    }


    /// Moves every target to time `t` with unchanged modes.
    fn advance(&mut self, t: f64) -> Result<(), CovarianceError> {
        let m = self.target_count();
        while self.next_sample < self.sample_count && self.sample_time(self.next_sample) <= t {
            let ts = self.sample_time(self.next_sample);
            let w = ts - self.clock;
            let (mut active, mut total, mut active_omega) = (0.0, 0.0, 0.0);
            let mut omega = Vec::with_capacity(m);
            for i in 0..m {
                let d = &self.dynamics[i];
                let area = d.contribution(self.mode[i], self.omega[i], w)?;
                let a = self.active_area[i] + if self.mode[i] == Mode::Active { area } else { 0.0 };
                active += a;
                total += a + self.inactive_area[i] + if self.mode[i] == Mode::Inactive { area } else { 0.0 };
                let now = d.propagate(self.mode[i], self.omega[i], w)?;
                if self.mode[i] == Mode::Active {
                    active_omega += now;
                }
                omega.push(now);
            }
            self.samples.push(Sample { t: ts, omega, active_omega, cum_active: active, cum_total: total });
            self.next_sample += 1;
        }
        let w = t - self.clock;
        if w > 0.0 {
            for i in 0..m {
                let d = &self.dynamics[i];
                let area = d.contribution(self.mode[i], self.omega[i], w)?;
                match self.mode[i] {
                    Mode::Active => self.active_area[i] += area,
                    Mode::Inactive => self.inactive_area[i] += area,
                }
                self.omega[i] = d.propagate(self.mode[i], self.omega[i], w)?;
            }
            self.clock = t;
        }
        for i in 0..m {
            self.worst_omega = self.worst_omega.max(self.omega[i]);
            let d = &self.dynamics[i];
            self.min_margin = self.min_margin.min(2.0 * d.a * self.omega[i] + d.q);
        }
        Ok(())
    }

    fn set_mode(&mut self, i: usize, mode: Mode) {
        if self.mode[i] == mode {
            return;
        }
        let (t0, omega0) = self.segment_start[i];
        self.segments[i].push(Segment { t0, t1: self.clock, mode: self.mode[i], omega0 });
        self.segment_start[i] = (self.clock, self.omega[i]);
        self.mode[i] = mode;
    }

    fn close_segments(&mut self) {
        for i in 0..self.target_count() {
            let (t0, omega0) = self.segment_start[i];
            self.segments[i].push(Segment { t0, t1: self.clock, mode: self.mode[i], omega0 });
        }
    }

    fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            t: self.clock,
            mission_end: self.config.horizon_t,
            graph: &self.config.graph,
            dynamics: &self.dynamics,
            omega: &self.omega,
            covered: &self.covered,
            horizon: self.config.planning_h,
        }
    }

    fn check(&mut self) -> Result<(), String> {
        let m = self.target_count();
        let mut occupancy = vec![0usize; m];
        let mut claims = vec![0usize; m];
        for a in &self.agents {
            match a.location {
                Location::AtTarget { target, .. } => {
                    occupancy[target] += 1;
                    claims[target] += 1;
                }
                Location::Traveling { to } => claims[to] += 1,
            }
        }
        let worst = occupancy.iter().copied().max().unwrap_or(0);
        self.max_occupancy = self.max_occupancy.max(worst);
        for i in 0..m {
            if occupancy[i] > 1 {
                return Err(format!("{} agents share target {i}", occupancy[i]));
            }
            if claims[i] > 1 {
                return Err(format!("target {i} is claimed by {} agents", claims[i]));
            }
            if self.covered[i] != (claims[i] == 1) {
                return Err(format!("cover flag of target {i} is stale"));
            }
            let active = occupancy[i] == 1;
            if (self.mode[i] == Mode::Active) != active {
                return Err(format!("mode of target {i} disagrees with its occupancy"));
            }
            let w = self.omega[i];
            if !(w > 0.0) || !w.is_finite() {
                return Err(format!("covariance of target {i} is {w}"));
            }
            if self.in_band {
                let (lo, hi) = self.dynamics[i].steady_states();
                if w < lo * (1.0 - BAND_TOLERANCE) || w > hi * (1.0 + BAND_TOLERANCE) {
                    return Err(format!("covariance {w} of target {i} left its band ({lo}, {hi})"));
                }
            }
        }
        Ok(())
    }
}

/// Runs `controller` on `config` until the mission ends.
pub fn run(config: &ProblemConfig, controller: &mut dyn Controller, options: &SimOptions) -> Result<SimOutput, SimError> {
    config.validate().map_err(|e| SimError::Config(e.to_string()))?;
    if !(options.sample_dt > 0.0) {
        return Err(SimError::Config("sample spacing must be positive".into()));
    }
    let m = config.graph.len();
    let horizon = config.horizon_t;
    let seed = options.seed.unwrap_or(config.rng_seed);
    let sample_count = (horizon / options.sample_dt - 1e-9).ceil() as usize + 1;
    let mut world = World {
        config,
        dynamics: config.graph.targets().iter().map(Dynamics::from_params).collect(),
        clock: 0.0,
        omega: config.omega0.clone(),
        mode: vec![Mode::Inactive; m],
        covered: vec![false; m],
        agents: Vec::with_capacity(config.num_agents),
        active_area: vec![0.0; m],
        inactive_area: vec![0.0; m],
        segments: vec![Vec::new(); m],
        segment_start: config.omega0.iter().map(|&w| (0.0, w)).collect(),
        worst_omega: 0.0,
        min_margin: f64::INFINITY,
        max_occupancy: 0,
        in_band: config.satisfies_initial_band(),
        samples: Vec::with_capacity(sample_count),
        sample_dt: options.sample_dt,
        next_sample: 0,
        sample_count,
    };

    let mut queue = EventQueue::new();
    for a in 0..config.num_agents {
        let start = controller.initial_target(a, config.agent_starts[a]);
        if start >= m || world.covered[start] {
            return Err(SimError::Config(format!("agent {a} cannot start at target {start}")));
        }
        world.covered[start] = true;
        world.mode[start] = Mode::Active;
        world.agents.push(Agent { location: Location::AtTarget { target: start, waiting: false }, version: 0 });
        queue.push(0.0, EventKind::Arrival { agent: a, target: start });
    }
    queue.push(horizon, EventKind::MissionEnd);

    let mut log: Vec<EventRecord> = Vec::new();
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let fail = |time: f64, message: String, log: &[EventRecord]| SimError::Invariant { time, message, log: log.to_vec() };
    if options.check_invariants {
        world.check().map_err(|msg| fail(0.0, msg, &log))?;
    }

    while let Some(event) = queue.pop() {
        let t = event.time;
        world.advance(t)?;
        let decision: Option<(usize, usize, Decision, f64)>;
        let invoke = |world: &World, f: &mut dyn FnMut(&Snapshot) -> Result<Option<Decision>, ControlError>| {
            let snap = world.snapshot();
            let start = Instant::now();
            let out = f(&snap);
            (out, start.elapsed().as_secs_f64() * 1e6)
        };
        match event.kind {
            EventKind::MissionEnd => {
                log.push(EventRecord { time: t, kind: event.kind.label(), agent: None, target: None, decision: None });
                break;
            }
            EventKind::Arrival { agent, target } => {
                if let Location::Traveling { to } = world.agents[agent].location {
                    debug_assert_eq!(to, target);
                    world.agents[agent].location = Location::AtTarget { target, waiting: false };
                    world.set_mode(target, Mode::Active);
                }
                let (out, us) = invoke(&world, &mut |s| controller.arrival(agent, target, s).map(Some));
                let d = out.map_err(|source| SimError::Control { time: t, source })?;
                decision = d.map(|d| (agent, target, d, us));
            }
            EventKind::DwellEnd { agent, target, version } => {
                let a = &world.agents[agent];
                let current = matches!(a.location, Location::AtTarget { target: i, waiting: false } if i == target);
                if !current || a.version != version {
                    continue;
                }
                let (out, us) = invoke(&world, &mut |s| controller.dwell_end(agent, target, s).map(Some));
                let d = out.map_err(|source| SimError::Control { time: t, source })?;
                decision = d.map(|d| (agent, target, d, us));
            }
            EventKind::Covering { agent, target: changed } | EventKind::Uncovering { agent, target: changed } => {
                let Location::AtTarget { target: i, waiting } = world.agents[agent].location else { continue };
                if !config.graph.has_edge(i, changed) {
                    continue;
                }
                let (out, us) =
                    invoke(&world, &mut |s| controller.neighborhood_change(agent, i, changed, waiting, s));
                let d = out.map_err(|source| SimError::Control { time: t, source })?;
                decision = d.map(|d| (agent, i, d, us));
            }
        }

        let mut record = EventRecord {
            time: t,
            kind: event.kind.label(),
            agent: event.kind.agent(),
            target: event.kind.target(),
            decision: None,
        };
        if let Some((agent, i, d, us)) = decision {
            let rec = DecisionRecord {
                time: t,
                agent,
                target: i,
                action: d.action,
                solver_calls: d.solver_calls,
                learned: d.learned,
                wall_us: us,
            };
            decisions.push(rec);
            record.decision = Some(rec);
            apply(&mut world, &mut queue, agent, i, d.action).map_err(|msg| fail(t, msg, &log))?;
        }
        log.push(record);
        if options.check_invariants {
            world.check().map_err(|msg| fail(t, msg, &log))?;
        }
    }
    world.advance(horizon)?;
    world.close_segments();

    let tracking = options.tracking.map(|opts| {
        let times: Vec<f64> = world.samples.iter().map(|s| s.t).collect();
        config
            .graph
            .targets()
            .iter()
            .enumerate()
            .map(|(i, p)| tracking::integrate_target(i, p, &world.segments[i], horizon, &opts, &times, seed))
            .collect::<Vec<_>>()
    });
    let report = controller.report();
    let contributions: Vec<(f64, f64)> = world.active_area.iter().copied().zip(world.inactive_area.iter().copied()).collect();
    let summary = metrics::summarize(
        controller.name(),
        seed,
        horizon,
        &contributions,
        world.worst_omega,
        tracking.as_ref().map(|t| t.iter().map(|x| x.j_c).sum::<f64>() / m as f64),
        &decisions,
        log.len(),
        world.max_occupancy,
        world.min_margin,
        &report,
    );
    Ok(SimOutput {
        controller: controller.name().to_string(),
        seed,
        horizon,
        summary,
        events: log,
        decisions,
        samples: world.samples,
        contributions,
        segments: world.segments,
        final_omega: world.omega,
        tracking_errors: tracking.map(|t| t.into_iter().map(|x| x.error_samples).collect()),
        report,
    })
}

/// Carries out a controller action for `agent` residing at `i`.
fn apply(world: &mut World, queue: &mut EventQueue, agent: usize, i: usize, action: Action) -> Result<(), String> {
    let t = world.clock;
    let horizon = world.config.horizon_t;
    world.agents[agent].version += 1;
    let version = world.agents[agent].version;
    match action {
        Action::Dwell { dwell, .. } => {
            if !(dwell >= 0.0) {
                return Err(format!("agent {agent} was given dwell {dwell}"));
            }
            world.agents[agent].location = Location::AtTarget { target: i, waiting: false };
            if t + dwell <= horizon {
                queue.push(t + dwell, EventKind::DwellEnd { agent, target: i, version });
            }
        }
        Action::Wait => {
            world.agents[agent].location = Location::AtTarget { target: i, waiting: true };
        }
        Action::Depart { to, .. } => {
            let graph = &world.config.graph;
            if !graph.has_edge(i, to) {
                return Err(format!("agent {agent} cannot travel {i} -> {to}: no edge"));
            }
            if world.covered[to] {
                return Err(format!("agent {agent} departs {i} toward covered target {to}"));
            }
            world.agents[agent].location = Location::Traveling { to };
            world.covered[i] = false;
            world.covered[to] = true;
            world.set_mode(i, Mode::Inactive);
            let arrival = t + graph.rho(i, to);
            if arrival <= horizon {
                queue.push(arrival, EventKind::Arrival { agent, target: to });
            }
            for (b, other) in world.agents.iter().enumerate() {
                if b == agent {
                    continue;
                }
                if let Location::AtTarget { target: k, .. } = other.location {
                    if graph.has_edge(k, to) {
                        queue.push(t, EventKind::Covering { agent: b, target: to });
                    }
                    if graph.has_edge(k, i) {
                        queue.push(t, EventKind::Uncovering { agent: b, target: i });
                    }
                }
            }
        }
    }
    Ok(())
}
