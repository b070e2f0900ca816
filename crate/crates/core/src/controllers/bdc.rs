use super::{Action, ControlError, Controller, Decision, Snapshot};
use crate::covariance::Dynamics;

/// Relative distance to `Ω_ss` at which a BDC agent stops dwelling.
pub const BDC_EPSILON: f64 = 0.075;

/// Threshold-dwell baseline: sense until `Ω_i ≤ (1+ε)Ω_ss,i`, then go to the
/// uncovered neighbor with the largest covariance.
#[derive(Debug, Clone)]
pub struct Bdc {
    epsilon: f64,
}

impl Bdc {
    pub fn new(epsilon: f64) -> Self {
        Bdc { epsilon }
    }
}

/// Sensing time until `Ω ≤ (1+ε)Ω_ss`; 0 when already below.
pub fn bdc_dwell(d: &Dynamics, omega: f64, epsilon: f64) -> Result<f64, ControlError> {
    Ok(d.active_time_to_reach(omega, (1.0 + epsilon) * d.omega_ss())?)
}

/// `argmax_j Ω_j` over `candidates`, ties to the lowest index.
pub fn bdc_next_visit(candidates: &[usize], omega: &[f64]) -> Option<usize> {
    candidates.iter().copied().fold(None, |best, j| match best {
        Some(b) if omega[b] > omega[j] || (omega[b] == omega[j] && b < j) => Some(b),
        _ => Some(j),
    })
}

impl Controller for Bdc {
    fn name(&self) -> &str {
        "bdc"
    }

    fn arrival(&mut self, _agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        let dwell = bdc_dwell(&snap.dynamics[i], snap.omega[i], self.epsilon)?;
        Ok(Decision::new(Action::Dwell { dwell, next: None, next_dwell: 0.0 }, 0))
    }

    fn dwell_end(&mut self, _agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        Ok(match bdc_next_visit(&snap.uncovered_neighbors(i), snap.omega) {
            Some(to) => Decision::new(Action::Depart { to, dwell_there: 0.0 }, 0),
            None => Decision::wait(),
        })
    }

    /// The dwell rule ignores neighbors; a waiting agent leaves as soon as a
    /// neighbor frees up.
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
