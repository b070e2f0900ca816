use super::bdc::bdc_dwell;
use super::{Action, ControlError, Controller, CycleAssignment, Decision, Snapshot};
use crate::rhcp::{solve_arrival_for, LocalState, PgdSettings};

/// How a periodic controller picks dwell times; the visiting order always
/// follows the planned cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodicMode {
    /// Planned dwell times (MTSP).
    Fixed,
    /// Arrival subproblem restricted to the cycle neighbors (RHC-P).
    Rhc(PgdSettings),
    /// Threshold rule (BDC-P).
    Bdc(f64),
}

#[derive(Debug, Clone)]
pub struct PeriodicController {
    plan: CycleAssignment,
    mode: PeriodicMode,
    position: Vec<usize>,
}

impl PeriodicController {
    pub fn new(plan: CycleAssignment, mode: PeriodicMode) -> Self {
        let position = plan.start_position.clone();
        PeriodicController { plan, mode, position }
    }

    pub fn plan(&self) -> &CycleAssignment {
        &self.plan
    }
}

impl Controller for PeriodicController {
    fn name(&self) -> &str {
        match self.mode {
            PeriodicMode::Fixed => "mtsp",
            PeriodicMode::Rhc(_) => "rhc-p",
            PeriodicMode::Bdc(_) => "bdc-p",
        }
    }

    fn initial_target(&mut self, agent: usize, _start: usize) -> usize {
        self.position[agent] = self.plan.start_position[agent];
        self.plan.cycles[agent].walk[self.position[agent]]
    }

    fn arrival(&mut self, agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        let cycle = &self.plan.cycles[agent];
        let pos = self.position[agent];
        debug_assert_eq!(cycle.walk[pos], i);
        if cycle.walk.len() == 1 {
            return Ok(Decision::new(Action::Dwell { dwell: f64::INFINITY, next: None, next_dwell: 0.0 }, 0));
        }
        let j = cycle.walk[cycle.successor(pos)];
        let (dwell, next_dwell, calls) = match self.mode {
            PeriodicMode::Fixed => (cycle.dwell[pos], cycle.dwell[cycle.successor(pos)], 0),
            PeriodicMode::Bdc(eps) => (bdc_dwell(&snap.dynamics[i], snap.omega[i], eps)?, 0.0, 0),
            PeriodicMode::Rhc(pgd) => {
                let neighbors = cycle.cycle_neighbors(i);
                let state = LocalState::from_omega(i, snap.t, &neighbors, snap.omega)?;
                match solve_arrival_for(&state, snap.dynamics, j, snap.graph.rho(i, j), snap.horizon_now(), &pgd)? {
                    Some(c) => (c.u_i, c.u_j, 1),
                    None => (0.0, 0.0, 0),
                }
            }
        };
        Ok(Decision::new(Action::Dwell { dwell, next: Some(j), next_dwell }, calls))
    }

    fn dwell_end(&mut self, agent: usize, _i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        let cycle = &self.plan.cycles[agent];
        let next_pos = cycle.successor(self.position[agent]);
        let to = cycle.walk[next_pos];
        if snap.covered[to] {
            return Ok(Decision::wait());
        }
        self.position[agent] = next_pos;
        let dwell_there = if self.mode == PeriodicMode::Fixed { cycle.dwell[next_pos] } else { 0.0 };
        Ok(Decision::new(Action::Depart { to, dwell_there }, 0))
    }

    fn neighborhood_change(
        &mut self,
        agent: usize,
        i: usize,
        _changed: usize,
        waiting: bool,
        snap: &Snapshot,
    ) -> Result<Option<Decision>, ControlError> {
        if waiting {
            self.dwell_end(agent, i, snap).map(Some)
        } else {
            Ok(None)
        }
    }
}
