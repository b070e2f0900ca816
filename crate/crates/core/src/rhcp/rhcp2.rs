//! Departure-time subproblem: the agent leaves `i` now, travels to `j` and
//! dwells there for `u`.

use super::pgd::{minimize, project_interval, PgdSettings};
use super::{coefficient_a, ratio_objective, LocalState, RhcpError, Solution};
use crate::covariance::Dynamics;

/// `J̄(u) = −A(u)/(A(u)+B(u))` with
/// `A(u) = c1 + c2·ln(1 + c3·e^{−λu}) + c4·u` and
/// `B(u) = c5 + c6·u + Σ_k c7k·e^{2A_k·u}` over `k ∈ N̄_i(t) \ {j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhcp2Coefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    /// `(c7k, 2A_k)` per inactive neighborhood member.
    pub c7: Vec<(f64, f64)>,
    pub lambda_j: f64,
}

pub fn build_rhcp2(
    state: &LocalState,
    dynamics: &[Dynamics],
    j: usize,
    rho_ij: f64,
) -> Result<Rhcp2Coefficients, RhcpError> {
    state.check_neighbor(j)?;
    let dj = &dynamics[j];
    let omega_j = state.omega_of(j);
    let arrived = dj.propagate_inactive(omega_j, rho_ij)?;
    let delta = arrived - dj.omega_ss();
    let k = dj.g * delta / dj.lambda();
    let c2 = 1.0 / dj.g;
    let c3 = -k / (1.0 + k);
    let c1 = -c2 * c3.ln_1p();
    let c4 = dj.omega_ss();

    let mut c5 = dj.contribution_inactive(omega_j, rho_ij)?;
    let mut c6 = 0.0;
    let mut c7 = Vec::new();
    for &(m, omega_m) in state.members() {
        if m == j {
            continue;
        }
        let dm = &dynamics[m];
        let a = coefficient_a(dm.a);
        let half_q = dm.q / (2.0 * a);
        c5 -= (omega_m + half_q + dm.q * rho_ij) / (2.0 * a);
        c6 -= half_q;
        c7.push(((omega_m + half_q) * (2.0 * a * rho_ij).exp() / (2.0 * a), 2.0 * a));
    }
    Ok(Rhcp2Coefficients {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        lambda_j: dj.lambda(),
    })
}

impl Rhcp2Coefficients {
    /// `(A, A', B, B')` at `u`.
    pub fn parts(&self, u: f64) -> (f64, f64, f64, f64) {
        let e = (-self.lambda_j * u).exp();
        // c1 + c2·ln(1 + c3·e), arranged to vanish exactly at u = 0.
        let a = self.c2 * ((self.c3 * e).ln_1p() - self.c3.ln_1p()) + self.c4 * u;
        let da = self.c4 - self.c2 * self.lambda_j * self.c3 * e / (1.0 + self.c3 * e);
        let mut b = self.c5 + self.c6 * u;
        let mut db = self.c6;
        for &(c, rate) in &self.c7 {
            let x = c * (rate * u).exp();
            b += x;
            db += rate * x;
        }
        (a, da, b, db)
    }

    /// Objective value and derivative.
    pub fn eval(&self, u: f64) -> (f64, f64) {
        let (a, da, b, db) = self.parts(u);
        ratio_objective(a, da, b, db)
    }

    /// Large-`u` limit when every `A_k < 0`, else 0.
    pub fn limit(&self) -> f64 {
        if self.c7.iter().all(|&(_, rate)| rate < 0.0) {
            -1.0 / (1.0 + self.c6 / self.c4)
        } else {
            0.0
        }
    }
}

/// Minimizes over `u ∈ [0, u_max]` from the midpoint and keeps the best of
/// that and both endpoints.
pub fn solve_rhcp2(coeffs: &Rhcp2Coefficients, u_max: f64, settings: &PgdSettings) -> Solution<1> {
    if !(u_max > 0.0) {
        return Solution { u: [0.0], value: coeffs.eval(0.0).0, converged: true, iterations: 0 };
    }
    let r = minimize(
        |x: &[f64; 1]| {
            let (v, d) = coeffs.eval(x[0]);
            (v, [d])
        },
        |x| [project_interval(x[0], u_max)],
        [0.5 * u_max],
        settings,
    );
    let mut best = Solution { u: r.x, value: r.value, converged: r.converged, iterations: r.iterations };
    for end in [0.0, u_max] {
        let v = coeffs.eval(end).0;
        if v < best.value {
            best.u = [end];
            best.value = v;
        }
    }
    best
}
