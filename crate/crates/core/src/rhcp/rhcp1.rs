//! Arrival-time subproblem: the agent dwells `u_i` at `i`, travels to `j`
//! and dwells `u_j` there.
//!
//! With `P = e^{−λ_i u_i}`, `E = e^{2A_j u_i}`, `F = e^{−λ_j u_j}` and
//! `S = e^{2A_i u_j}`:
//!
//! ```text
//! A = a1 + a2·ln(1 + a3·P) + a4·ln|1 + a5·E + a6·F + a7·E·F| + a8·u_i + a9·u_j
//! B = b1 + b2·u_i + b3·u_j + b4·E + b5·S + Σ_k b6k·e^{2A_k(u_i+u_j)} + C
//! C = c1·(1 + c2·P + c3·S + c4·P·S) / (1 + c5·P)
//! ```
//!
//! `A` collects the sensed areas of `i` and `j`; `B` the unsensed areas of
//! `i` (after departure), of `j` (before arrival) and of every other
//! uncovered neighbor `k` (whole horizon).

use super::pgd::{minimize, project_triangle, PgdSettings};
use super::{coefficient_a, ratio_objective, LocalState, RhcpError, Solution};
use crate::covariance::Dynamics;

#[derive(Debug, Clone, PartialEq)]
pub struct Rhcp1Coefficients {
    pub a: [f64; 9],
    pub b: [f64; 5],
    /// `(b6k, 2A_k)` per other uncovered neighbor.
    pub b6: Vec<(f64, f64)>,
    pub c: [f64; 5],
    pub lambda_i: f64,
    pub lambda_j: f64,
    /// `2A_i`, `2A_j`.
    pub rate_i: f64,
    pub rate_j: f64,
}

pub fn build_rhcp1(
    state: &LocalState,
    dynamics: &[Dynamics],
    j: usize,
    rho_ij: f64,
) -> Result<Rhcp1Coefficients, RhcpError> {
    state.check_neighbor(j)?;
    let i = state.i;
    let (di, dj) = (&dynamics[i], &dynamics[j]);
    let (omega_i, omega_j) = (state.omega_of(i), state.omega_of(j));
    // Validates both covariances.
    di.propagate_active(omega_i, 0.0)?;
    dj.propagate_inactive(omega_j, 0.0)?;
    let (ai, aj) = (coefficient_a(di.a), coefficient_a(dj.a));

    // Sensed area at i.
    let ki = di.g * (omega_i - di.omega_ss()) / di.lambda();
    let a2 = 1.0 / di.g;
    let a3 = -ki / (1.0 + ki);
    let a8 = di.omega_ss();

    // Sensed area at j, which starts from the covariance it has after
    // u_i + ρ unobserved seconds: αE − β above its own steady state.
    let gamma = dj.g / dj.lambda();
    let alpha = (omega_j + dj.q / (2.0 * aj)) * (2.0 * aj * rho_ij).exp();
    let beta = dj.q / (2.0 * aj) + dj.omega_ss();
    let lead = 1.0 - gamma * beta;
    let a4 = 1.0 / dj.g;
    let a5 = gamma * alpha / lead;
    let a6 = gamma * beta / lead;
    let a7 = -a5;
    let a9 = dj.omega_ss();
    let a1 = -a2 * a3.ln_1p() - a4 * ln_abs_1p(a6);

    // Unsensed area at i after departure, split into the part driven by
    // Q_i (polynomial/exponential in u_j) and the part driven by the
    // covariance left behind (rational term C).
    let ei = (2.0 * ai * rho_ij).exp();
    let nu = (omega_i - di.omega_ss()) / (1.0 + ki);
    let c1 = -di.omega_ss() / (2.0 * ai);
    let c2 = a3 + nu / di.omega_ss();
    let c3 = -ei;
    let c4 = c2 * c3;
    let c5 = a3;
    let b5 = di.q * ei / (4.0 * ai * ai);

    let mut b1 = -di.q / (4.0 * ai * ai) * (1.0 + 2.0 * ai * rho_ij)
        - dj.q / (4.0 * aj * aj) * (1.0 + 2.0 * aj * rho_ij)
        - omega_j / (2.0 * aj);
    let mut b2 = -dj.q / (2.0 * aj);
    let mut b3 = -di.q / (2.0 * ai);
    let b4 = (dj.q + 2.0 * aj * omega_j) * (2.0 * aj * rho_ij).exp() / (4.0 * aj * aj);
    let mut b6 = Vec::new();
    for &(k, omega_k) in state.members() {
        if k == i || k == j {
            continue;
        }
        let dk = &dynamics[k];
        let ak = coefficient_a(dk.a);
        let half_q = dk.q / (2.0 * ak);
        b1 -= dk.q / (4.0 * ak * ak) * (1.0 + 2.0 * ak * rho_ij) + omega_k / (2.0 * ak);
        b2 -= half_q;
        b3 -= half_q;
        b6.push(((dk.q + 2.0 * ak * omega_k) * (2.0 * ak * rho_ij).exp() / (4.0 * ak * ak), 2.0 * ak));
    }

    Ok(Rhcp1Coefficients {
        a: [a1, a2, a3, a4, a5, a6, a7, a8, a9],
        b: [b1, b2, b3, b4, b5],
        b6,
        c: [c1, c2, c3, c4, c5],
        lambda_i: di.lambda(),
        lambda_j: dj.lambda(),
        rate_i: 2.0 * ai,
        rate_j: 2.0 * aj,
    })
}

fn ln_abs_1p(z: f64) -> f64 {
    if z > -1.0 {
        z.ln_1p()
    } else {
        (1.0 + z).abs().ln()
    }
}

/// Value and gradient pieces of `A` and `B` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rhcp1Parts {
    pub a: f64,
    pub da: [f64; 2],
    pub b: f64,
    pub db: [f64; 2],
}

impl Rhcp1Coefficients {
    pub fn parts(&self, u: [f64; 2]) -> Rhcp1Parts {
        let [_, a2, a3, a4, a5, a6, a7, a8, a9] = self.a;
        let [b1, b2, b3, b4, b5] = self.b;
        let [c1, c2, c3, c4, c5] = self.c;
        let (ui, uj) = (u[0], u[1]);
        let p = (-self.lambda_i * ui).exp();
        let e = (self.rate_j * ui).exp();
        let f = (-self.lambda_j * uj).exp();
        let s = (self.rate_i * uj).exp();

        let log_i = 1.0 + a3 * p;
        // a7 = −a5, so a5·E + a6·F + a7·E·F = a6·F + a5·E·(1 − F).
        let z = a6 * f + a5 * e * -(-self.lambda_j * uj).exp_m1();
        let inner = 1.0 + z;
        // a1 is split back into its two logarithms so each bracket vanishes
        // exactly at the origin.
        let a = a2 * ((a3 * p).ln_1p() - a3.ln_1p()) + a4 * (ln_abs_1p(z) - ln_abs_1p(a6)) + a8 * ui + a9 * uj;
        let da_i = -a2 * self.lambda_i * a3 * p / log_i + a4 * self.rate_j * (a5 * e + a7 * e * f) / inner + a8;
        let da_j = -a4 * self.lambda_j * (a6 * f + a7 * e * f) / inner + a9;

        let num = 1.0 + c2 * p + c3 * s + c4 * p * s;
        let den = 1.0 + c5 * p;
        let c = c1 * num / den;
        let dc_i = c1 * (-self.lambda_i) * ((c2 * p + c4 * p * s) * den - num * c5 * p) / (den * den);
        let dc_j = c1 * self.rate_i * (c3 * s + c4 * p * s) / den;

        let mut b = b1 + b2 * ui + b3 * uj + b4 * e + b5 * s + c;
        let mut db_i = b2 + self.rate_j * b4 * e + dc_i;
        let mut db_j = b3 + self.rate_i * b5 * s + dc_j;
        for &(coef, rate) in &self.b6 {
            let x = coef * (rate * (ui + uj)).exp();
            b += x;
            db_i += rate * x;
            db_j += rate * x;
        }
        Rhcp1Parts { a, da: [da_i, da_j], b, db: [db_i, db_j] }
    }

    /// Objective value and gradient.
    pub fn eval(&self, u: [f64; 2]) -> (f64, [f64; 2]) {
        let p = self.parts(u);
        let (v, gi) = ratio_objective(p.a, p.da[0], p.b, p.db[0]);
        let (_, gj) = ratio_objective(p.a, p.da[1], p.b, p.db[1]);
        (v, [gi, gj])
    }

    /// Limit along `u_j = 0`, `u_i → ∞`; nonzero only when `A_j` and every
    /// other neighbor's `A_k` are negative.
    pub fn limit_i(&self) -> f64 {
        if self.rate_j < 0.0 && self.b6.iter().all(|&(_, r)| r < 0.0) {
            -1.0 / (1.0 + self.b[1] / self.a[7])
        } else {
            0.0
        }
    }

    /// Limit along `u_i = 0`, `u_j → ∞`; nonzero only when `A_i` and every
    /// other neighbor's `A_k` are negative.
    pub fn limit_j(&self) -> f64 {
        if self.rate_i < 0.0 && self.b6.iter().all(|&(_, r)| r < 0.0) {
            -1.0 / (1.0 + self.b[2] / self.a[8])
        } else {
            0.0
        }
    }
}

/// Multi-start projected gradient descent over
/// `{u_i, u_j ≥ 0, u_i + u_j ≤ budget}`: the centroid and the three
/// corners; the best result (or corner) wins.
pub fn solve_rhcp1(coeffs: &Rhcp1Coefficients, budget: f64, settings: &PgdSettings) -> Solution<2> {
    if !(budget > 0.0) {
        return Solution { u: [0.0, 0.0], value: coeffs.eval([0.0, 0.0]).0, converged: true, iterations: 0 };
    }
    let starts = [
        [budget / 3.0, budget / 3.0],
        [0.0, 0.0],
        [budget, 0.0],
        [0.0, budget],
    ];
    let mut best: Option<Solution<2>> = None;
    let mut iterations = 0;
    for x0 in starts {
        let r = minimize(|x: &[f64; 2]| coeffs.eval(*x), |x| project_triangle(x, budget), x0, settings);
        iterations += r.iterations;
        let candidate = Solution { u: r.x, value: r.value, converged: r.converged, iterations: 0 };
        let corner = Solution { u: x0, value: coeffs.eval(x0).0, converged: true, iterations: 0 };
        for c in [candidate, corner] {
            if best.as_ref().is_none_or(|b| c.value < b.value) {
                best = Some(c);
            }
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = iterations;
    best
}
