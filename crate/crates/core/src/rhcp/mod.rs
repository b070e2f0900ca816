//! Receding-horizon subproblems.
//!
//! Both subproblems minimize the negated fraction of the neighborhood's
//! covariance area that is accumulated while sensed,
//! `J̄ = −A/(A + B)`, where `A` is the sensed (active) area and `B` the
//! unsensed (inactive) area over the planning horizon `w = u_i + ρ_ij + u_j`.
//! [`rhcp1`] is solved on arrival (free `u_i`, `u_j`), [`rhcp2`] when the
//! dwell ends (`u_i = 0`). Each is solved per candidate neighbor and
//! [`select_next_visit`] picks the best.

pub mod pgd;
pub mod rhcp1;
pub mod rhcp2;

use thiserror::Error;

use crate::covariance::{CovarianceError, Dynamics};

pub use pgd::{project_triangle, PgdSettings};
pub use rhcp1::{build_rhcp1, solve_rhcp1, Rhcp1Coefficients};
pub use rhcp2::{build_rhcp2, solve_rhcp2, Rhcp2Coefficients};

/// `|A|` below which coefficient forms use `±REGULARIZED_A` instead; the
/// coefficients divide by `A²` and would otherwise cancel catastrophically.
pub const REGULARIZED_A: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhcpError {
    #[error("no uncovered neighbor is reachable within the planning horizon")]
    EmptyNeighborhood,
    #[error("target {0} is not in the local neighborhood")]
    NotANeighbor(usize),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

/// Covariances of the uncovered neighborhood `N̄_i(t)` (self included) at
/// decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub i: usize,
    pub t: f64,
    members: Vec<(usize, f64)>,
}

impl LocalState {
    /// `members` must contain `i`; entries are sorted by target index.
    pub fn new(i: usize, t: f64, mut members: Vec<(usize, f64)>) -> Result<Self, RhcpError> {
        members.sort_by_key(|&(k, _)| k);
        members.dedup_by_key(|&mut (k, _)| k);
        if !members.iter().any(|&(k, _)| k == i) {
            return Err(RhcpError::NotANeighbor(i));
        }
        for &(_, omega) in &members {
            if !(omega > 0.0) {
                return Err(CovarianceError::NonPositiveOmega(omega).into());
            }
        }
        Ok(LocalState { i, t, members })
    }

    /// Gathers `i` and `neighbors` from a full covariance vector.
    pub fn from_omega(i: usize, t: f64, neighbors: &[usize], omega: &[f64]) -> Result<Self, RhcpError> {
        let members = std::iter::once(i).chain(neighbors.iter().copied()).map(|k| (k, omega[k])).collect();
        Self::new(i, t, members)
    }

    pub fn members(&self) -> &[(usize, f64)] {
        &self.members
    }

    /// Neighbors other than `i`.
    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|&(k, _)| k).filter(move |&k| k != self.i)
    }

    pub fn omega_of(&self, k: usize) -> f64 {
        self.members
            .binary_search_by_key(&k, |&(m, _)| m)
            .map(|idx| self.members[idx].1)
            .unwrap_or(f64::NAN)
    }

    fn check_neighbor(&self, j: usize) -> Result<(), RhcpError> {
        if j == self.i || self.members.binary_search_by_key(&j, |&(m, _)| m).is_err() {
            return Err(RhcpError::NotANeighbor(j));
        }
        Ok(())
    }
}

/// A solved subproblem: dwell times and the objective value there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution<const N: usize> {
    pub u: [f64; N],
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Dwell plan `(u_i, j, u_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub u_i: f64,
    pub next: usize,
    pub u_j: f64,
    pub value: f64,
}

/// Per-neighbor result fed to [`select_next_visit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub j: usize,
    pub u_i: f64,
    pub u_j: f64,
    pub value: f64,
}

/// Lowest objective value wins; ties go to the lowest target index.
pub fn select_next_visit(candidates: &[Candidate]) -> Result<Candidate, RhcpError> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.j.cmp(&b.j)))
        .ok_or(RhcpError::EmptyNeighborhood)
}

/// Solves the arrival subproblem for every reachable uncovered neighbor.
/// Returns the chosen plan and the number of continuous solves performed.
pub fn solve_arrival(
    state: &LocalState,
    dynamics: &[Dynamics],
    rho: impl Fn(usize) -> f64,
    horizon: f64,
    settings: &PgdSettings,
) -> Result<(ControlDecision, usize), RhcpError> {
    let mut candidates = Vec::new();
    for j in state.neighbors() {
        if let Some(c) = solve_arrival_for(state, dynamics, j, rho(j), horizon, settings)? {
            candidates.push(c);
        }
    }
    let best = select_next_visit(&candidates)?;
    Ok((best.into(), candidates.len()))
}

/// Arrival subproblem for one neighbor; `None` when `ρ_ij > H`.
pub fn solve_arrival_for(
    state: &LocalState,
    dynamics: &[Dynamics],
    j: usize,
    rho_ij: f64,
    horizon: f64,
    settings: &PgdSettings,
) -> Result<Option<Candidate>, RhcpError> {
    if rho_ij > horizon {
        return Ok(None);
    }
    let coeffs = build_rhcp1(state, dynamics, j, rho_ij)?;
    let s = solve_rhcp1(&coeffs, horizon - rho_ij, settings);
    Ok(Some(Candidate { j, u_i: s.u[0], u_j: s.u[1], value: s.value }))
}

/// Departure subproblem for every reachable uncovered neighbor.
pub fn solve_departure(
    state: &LocalState,
    dynamics: &[Dynamics],
    rho: impl Fn(usize) -> f64,
    horizon: f64,
    settings: &PgdSettings,
) -> Result<(ControlDecision, usize), RhcpError> {
    let mut candidates = Vec::new();
    for j in state.neighbors() {
        if let Some(c) = solve_departure_for(state, dynamics, j, rho(j), horizon, settings)? {
            candidates.push(c);
        }
    }
    let best = select_next_visit(&candidates)?;
    Ok((best.into(), candidates.len()))
}

/// Departure subproblem for one neighbor; `None` when `ρ_ij > H`.
pub fn solve_departure_for(
    state: &LocalState,
    dynamics: &[Dynamics],
    j: usize,
    rho_ij: f64,
    horizon: f64,
    settings: &PgdSettings,
) -> Result<Option<Candidate>, RhcpError> {
    if rho_ij > horizon {
        return Ok(None);
    }
    let coeffs = build_rhcp2(state, dynamics, j, rho_ij)?;
    let s = solve_rhcp2(&coeffs, horizon - rho_ij, settings);
    Ok(Some(Candidate { j, u_i: 0.0, u_j: s.u[0], value: s.value }))
}

impl From<Candidate> for ControlDecision {
    fn from(c: Candidate) -> Self {
        ControlDecision { u_i: c.u_i, next: c.j, u_j: c.u_j, value: c.value }
    }
}

pub(crate) fn coefficient_a(a: f64) -> f64 {
    if a.abs() >= REGULARIZED_A {
        a
    } else if a < 0.0 {
        -REGULARIZED_A
    } else {
        REGULARIZED_A
    }
}

/// `J = −A/(A+B)` and its derivative from the pieces. `A` is clamped at 0
/// (it is a nonnegative area that can round to a tiny negative near the
/// origin) so the value stays in `[−1, 0]`.
pub(crate) fn ratio_objective(a: f64, da: f64, b: f64, db: f64) -> (f64, f64) {
    let a = a.max(0.0);
    let total = a + b;
    if !(total > 0.0) {
        return (0.0, 0.0);
    }
    let value = (-a / total).clamp(-1.0, 0.0);
    (value, -(da * b - a * db) / (total * total))
}
