//! Agent decision policies invoked by the simulator at agent events.
//!
//! Every policy answers three questions for an agent residing at target
//! `i`: how long to stay after arriving ([`Controller::arrival`]), where to
//! go once the dwell ends ([`Controller::dwell_end`]), and whether a change
//! in the set of covered neighbors alters the plan
//! ([`Controller::neighborhood_change`]).

mod bdc;
pub mod mtsp;
mod periodic;
mod rhc;

use thiserror::Error;

use crate::covariance::{CovarianceError, Dynamics};
use crate::learning::{LearningController, LearningError, LearningOptions};
use crate::network::{NetworkGraph, PlanningHorizon, ProblemConfig};
use crate::rhcp::{PgdSettings, RhcpError};

pub use bdc::{bdc_dwell, bdc_next_visit, Bdc, BDC_EPSILON};
pub use mtsp::{mtsp_plan, Cycle, CycleAssignment, MtspOptions};
pub use periodic::{PeriodicController, PeriodicMode};
pub use rhc::Rhc;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Rhcp(#[from] RhcpError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("unknown controller '{0}' (expected one of: {names})", names = CONTROLLER_NAMES.join(", "))]
    UnknownController(String),
    #[error("cycle planning failed: {0}")]
    Planning(String),
}

/// Names accepted by [`controller_by_name`].
pub const CONTROLLER_NAMES: [&str; 8] = ["rhc", "bdc", "mtsp", "rhc-p", "bdc-p", "rhc-l", "rhc-al", "rhc-le"];

/// What a controller sees when it is invoked: the current covariances of
/// every target and which targets are covered by some agent.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub t: f64,
    pub mission_end: f64,
    pub graph: &'a NetworkGraph,
    pub dynamics: &'a [Dynamics],
    pub omega: &'a [f64],
    pub covered: &'a [bool],
    pub horizon: PlanningHorizon,
}

impl Snapshot<'_> {
    /// Planning horizon `H` at the current time.
    pub fn horizon_now(&self) -> f64 {
        self.horizon.at(self.t, self.mission_end)
    }

    /// `N_i(t)`: neighbors of `i` not covered by any agent, ascending.
    pub fn uncovered_neighbors(&self, i: usize) -> Vec<usize> {
        self.graph.neighbor_slice(i).iter().copied().filter(|&j| !self.covered[j]).collect()
    }

    /// Uncovered neighbors that can be reached within the planning horizon.
    pub fn reachable_neighbors(&self, i: usize) -> Vec<usize> {
        let h = self.horizon_now();
        self.uncovered_neighbors(i).into_iter().filter(|&j| self.graph.rho(i, j) <= h).collect()
    }
}

/// The immediate action chosen by a controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Keep sensing the current target for `dwell` more seconds (possibly
    /// infinite). `next`/`next_dwell` record the planned continuation.
    Dwell { dwell: f64, next: Option<usize>, next_dwell: f64 },
    /// Leave now toward `to`; `dwell_there` is the planned dwell on arrival.
    Depart { to: usize, dwell_there: f64 },
    /// No admissible neighbor: keep sensing until the neighborhood changes.
    Wait,
}

/// A controller's answer plus bookkeeping for the decision-cost metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Continuous subproblem solves performed for this decision.
    pub solver_calls: usize,
    /// The next-visit target came from a trained classifier.
    pub learned: bool,
}

impl Decision {
    pub fn new(action: Action, solver_calls: usize) -> Self {
        Decision { action, solver_calls, learned: false }
    }

    pub fn wait() -> Self {
        Decision::new(Action::Wait, 0)
    }
}

/// An agent decision policy.
pub trait Controller: Send {
    fn name(&self) -> &str;

    /// Target where `agent` starts. Periodic policies move agents onto
    /// their cycles; the default keeps the configured start.
    fn initial_target(&mut self, _agent: usize, start: usize) -> usize {
        start
    }

    /// Agent has just arrived at `i` (or starts there). Expected to return
    /// [`Action::Dwell`] or [`Action::Wait`].
    fn arrival(&mut self, agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError>;

    /// The dwell at `i` has ended. Expected to return [`Action::Depart`] or
    /// [`Action::Wait`].
    fn dwell_end(&mut self, agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError>;

    /// Neighbor `changed` of `i` was covered or uncovered while the agent is
    /// at `i`. `waiting` tells whether the agent is in the wait state.
    /// `None` keeps the current plan.
    fn neighborhood_change(
        &mut self,
        agent: usize,
        i: usize,
        changed: usize,
        waiting: bool,
        snap: &Snapshot,
    ) -> Result<Option<Decision>, ControlError>;

    /// Free-form counters reported in run summaries.
    fn report(&self) -> ControllerReport {
        ControllerReport::default()
    }
}

/// Counters a controller may expose at the end of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerReport {
    pub trainings: usize,
    pub learned_decisions: usize,
    pub full_decisions: usize,
    pub gate_fallbacks: usize,
}

/// Construction options shared by all policies.
#[derive(Debug, Clone)]
pub struct ControllerOptions {
    pub pgd: PgdSettings,
    pub bdc_epsilon: f64,
    pub learning: LearningOptions,
    pub mtsp: MtspOptions,
    /// Seeds clustering restarts and network initialization.
    pub seed: u64,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        ControllerOptions {
            pgd: PgdSettings::default(),
            bdc_epsilon: BDC_EPSILON,
            learning: LearningOptions::default(),
            mtsp: MtspOptions::default(),
            seed: 0,
        }
    }
}

/// Builds a controller from its name: `rhc`, `bdc`, `mtsp`, `rhc-p`,
/// `bdc-p`, `rhc-l`, `rhc-al` or `rhc-le` (RHC-L with the extended data
/// set size).
pub fn controller_by_name(
    name: &str,
    config: &ProblemConfig,
    options: &ControllerOptions,
) -> Result<Box<dyn Controller>, ControlError> {
    let lower = name.to_ascii_lowercase();
    Ok(match lower.as_str() {
        "rhc" => Box::new(Rhc::new(options.pgd)),
        "bdc" => Box::new(Bdc::new(options.bdc_epsilon)),
        "mtsp" | "rhc-p" | "bdc-p" => {
            let plan = mtsp_plan(config, &options.mtsp, options.seed)?;
            let mode = match lower.as_str() {
                "mtsp" => PeriodicMode::Fixed,
                "rhc-p" => PeriodicMode::Rhc(options.pgd),
                _ => PeriodicMode::Bdc(options.bdc_epsilon),
            };
            Box::new(PeriodicController::new(plan, mode))
        }
        "rhc-l" => Box::new(LearningController::rhc_l(options.learning.clone(), options.pgd, options.seed)),
        "rhc-le" => {
            let mut learning = options.learning.clone();
            learning.dataset_size = learning.extended_dataset_size;
            Box::new(LearningController::rhc_l(learning, options.pgd, options.seed).named("rhc-le"))
        }
        "rhc-al" => Box::new(LearningController::rhc_al(options.learning.clone(), options.pgd, options.seed)),
        _ => return Err(ControlError::UnknownController(name.to_string())),
    })
}
