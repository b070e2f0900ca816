//! Independent numerical oracles shared by the integration tests: RK4 for
//! the Riccati equations, adaptive Simpson quadrature, and subproblem
//! objectives assembled directly from the covariance integrals.
#![allow(dead_code)]

use nalgebra::DMatrix;
use pmn_core::covariance::{Dynamics, Mode};
use pmn_core::rhcp::LocalState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Classic RK4 on `dΩ/dt = 2AΩ + Q − ηGΩ²`.
pub fn rk4_scalar(d: &Dynamics, mode: Mode, omega0: f64, w: f64, h: f64) -> f64 {
    if w == 0.0 {
        return omega0;
    }
    let steps = (w / h).ceil().max(1.0) as usize;
    let h = w / steps as f64;
    let mut y = omega0;
    for _ in 0..steps {
        let k1 = d.rate(mode, y);
        let k2 = d.rate(mode, y + 0.5 * h * k1);
        let k3 = d.rate(mode, y + 0.5 * h * k2);
        let k4 = d.rate(mode, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

/// RK4 on `Ω̇ = AΩ + ΩAᵀ + Q − ηΩGΩ`.
pub fn rk4_matrix(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    omega0: &DMatrix<f64>,
    eta: f64,
    w: f64,
    h: f64,
) -> DMatrix<f64> {
    let rate = |o: &DMatrix<f64>| a * o + o * a.transpose() + q - (o * g * o) * eta;
    let steps = (w / h).ceil().max(1.0) as usize;
    let h = w / steps as f64;
    let mut y = omega0.clone();
    for _ in 0..steps {
        let k1 = rate(&y);
        let k2 = rate(&(&y + &k1 * (0.5 * h)));
        let k3 = rate(&(&y + &k2 * (0.5 * h)));
        let k4 = rate(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// Adaptive Simpson quadrature to tolerance `tol·max(1, |∫f|)`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol * whole.abs().max(1.0), 40)
}

/// Random dynamics with `A ∈ [−1, 1]` away from 0, `Q ∈ [0.1, 2.1]`,
/// `G ∈ [0.1, 0.5]`.
pub fn random_dynamics(r: &mut impl Rng) -> Dynamics {
    let mut a: f64 = r.random_range(-1.0..1.0);
    while a.abs() < 0.01 {
        a = r.random_range(-1.0..1.0);
    }
    Dynamics::new(a, r.random_range(0.1..2.1), r.random_range(0.1..0.5))
}

/// Dynamics with the signs of `A` chosen by the caller, magnitude in
/// `[0.01, 0.41]`.
pub fn signed_dynamics(r: &mut impl Rng, negative: bool) -> Dynamics {
    let m: f64 = r.random_range(0.01..0.41);
    Dynamics::new(if negative { -m } else { m }, r.random_range(0.1..2.1), r.random_range(0.1..0.5))
}

/// A covariance inside the invariant band, capped at `10·Ω_ss`.
pub fn band_omega(r: &mut impl Rng, d: &Dynamics) -> f64 {
    let hi = d.omega_bar_ss().min(10.0 * d.omega_ss());
    let u: f64 = r.random_range(0.001..0.999);
    d.omega_ss() + u * (hi - d.omega_ss())
}

/// One random local subproblem: target 0 is `i`, target 1 is `j`, the rest
/// are other uncovered neighbors.
pub struct Instance {
    pub dynamics: Vec<Dynamics>,
    pub omega: Vec<f64>,
    pub rho: f64,
}

impl Instance {
    pub fn state(&self) -> LocalState {
        let neighbors: Vec<usize> = (1..self.dynamics.len()).collect();
        LocalState::from_omega(0, 0.0, &neighbors, &self.omega).unwrap()
    }
}

pub fn random_instance(r: &mut impl Rng, sign: Option<bool>) -> Instance {
    let n = r.random_range(2..=5usize);
    let dynamics: Vec<Dynamics> = (0..n)
        .map(|_| match sign {
            Some(neg) => signed_dynamics(r, neg),
            None => random_dynamics(r),
        })
        .collect();
    let omega = dynamics.iter().map(|d| band_omega(r, d)).collect();
    Instance { dynamics, omega, rho: r.random_range(0.1..1.0) }
}

/// Departure objective assembled from the covariance integrals.
pub fn rhcp2_direct(inst: &Instance, u: f64) -> (f64, f64) {
    let dj = &inst.dynamics[1];
    let arrived = dj.propagate_inactive(inst.omega[1], inst.rho).unwrap();
    let a = dj.contribution_active(arrived, u).unwrap();
    let mut b = dj.contribution_inactive(inst.omega[1], inst.rho).unwrap();
    for k in (0..inst.dynamics.len()).filter(|&k| k != 1) {
        b += inst.dynamics[k].contribution_inactive(inst.omega[k], inst.rho + u).unwrap();
    }
    (a, b)
}

/// Arrival objective assembled from the covariance integrals.
pub fn rhcp1_direct(inst: &Instance, ui: f64, uj: f64) -> (f64, f64) {
    let (di, dj) = (&inst.dynamics[0], &inst.dynamics[1]);
    let w = ui + inst.rho + uj;
    let left_i = di.propagate_active(inst.omega[0], ui).unwrap();
    let arrived_j = dj.propagate_inactive(inst.omega[1], ui + inst.rho).unwrap();
    let a = di.contribution_active(inst.omega[0], ui).unwrap() + dj.contribution_active(arrived_j, uj).unwrap();
    let mut b = di.contribution_inactive(left_i, inst.rho + uj).unwrap()
        + dj.contribution_inactive(inst.omega[1], ui + inst.rho).unwrap();
    for k in 2..inst.dynamics.len() {
        b += inst.dynamics[k].contribution_inactive(inst.omega[k], w).unwrap();
    }
    (a, b)
}

pub fn ratio(a: f64, b: f64) -> f64 {
    -a / (a + b)
}

/// Relative error with an absolute floor for values near zero.
pub fn rel_err(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-12)
}

/// Gradient agreement measure: relative to the larger magnitude, with an
/// absolute floor so derivatives that vanish are not over-penalized.
pub fn grad_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Number of sign changes in a sequence, ignoring entries within `tol` of 0.
pub fn sign_changes(values: impl Iterator<Item = f64>, tol: f64) -> usize {
    let mut last = 0i8;
    let mut changes = 0;
    for v in values {
        let s = if v > tol {
            1
        } else if v < -tol {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}
