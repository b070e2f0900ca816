use super::{Action, ControlError, Controller, Decision, Snapshot};
use crate::rhcp::{solve_arrival, solve_departure, LocalState, PgdSettings, RhcpError};

/// Event-driven receding horizon controller.
#[derive(Debug, Clone)]
pub struct Rhc {
    pgd: PgdSettings,
}

impl Rhc {
    pub fn new(pgd: PgdSettings) -> Self {
        Rhc { pgd }
    }

    /// Arrival subproblem over the reachable uncovered neighbors of `i`.
    pub fn plan_arrival(&self, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        let neighbors = snap.reachable_neighbors(i);
        if neighbors.is_empty() {
            return Ok(Decision::wait());
        }
        let state = LocalState::from_omega(i, snap.t, &neighbors, snap.omega)?;
        match solve_arrival(&state, snap.dynamics, |j| snap.graph.rho(i, j), snap.horizon_now(), &self.pgd) {
            Ok((d, calls)) => Ok(Decision::new(
                Action::Dwell { dwell: d.u_i, next: Some(d.next), next_dwell: d.u_j },
                calls,
            )),
            Err(RhcpError::EmptyNeighborhood) => Ok(Decision::wait()),
            Err(e) => Err(e.into()),
        }
    }

    /// Departure subproblem over the reachable uncovered neighbors of `i`.
    pub fn plan_departure(&self, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        let neighbors = snap.reachable_neighbors(i);
        if neighbors.is_empty() {
            return Ok(Decision::wait());
        }
        let state = LocalState::from_omega(i, snap.t, &neighbors, snap.omega)?;
        match solve_departure(&state, snap.dynamics, |j| snap.graph.rho(i, j), snap.horizon_now(), &self.pgd) {
            Ok((d, calls)) => Ok(Decision::new(Action::Depart { to: d.next, dwell_there: d.u_j }, calls)),
            Err(RhcpError::EmptyNeighborhood) => Ok(Decision::wait()),
            Err(e) => Err(e.into()),
        }
    }
}

impl Controller for Rhc {
    fn name(&self) -> &str {
        "rhc"
    }

    fn arrival(&mut self, _agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        self.plan_arrival(i, snap)
    }

    fn dwell_end(&mut self, _agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        self.plan_departure(i, snap)
    }

    /// Any change of `N_i(t)` re-solves the arrival subproblem from the
    /// current time, whether the agent is dwelling or waiting.
    fn neighborhood_change(
        &mut self,
        _agent: usize,
        i: usize,
        _changed: usize,
        _waiting: bool,
        snap: &Snapshot,
    ) -> Result<Option<Decision>, ControlError> {
        self.plan_arrival(i, snap).map(Some)
    }
}
