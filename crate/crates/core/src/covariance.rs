//! Closed-form propagation of the scalar Kalman-Bucy error covariance and of
//! its time integral.
//!
//! A target's covariance obeys `dΩ/dt = 2AΩ + Q − ηGΩ²`, where `η` is 1 while
//! an agent senses the target (active) and 0 otherwise (inactive). Both modes
//! admit closed forms; they are written here in terms of `expm1`/`ln_1p` so
//! that short intervals and near-steady states do not cancel.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::network::{TargetDerived, TargetParams, SINGULAR_A};

/// Below this `|2Aw|` the inactive integral uses its Taylor series.
const PHI2_SERIES_CUTOFF: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovarianceError {
    #[error("covariance must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("duration must be nonnegative, got {0}")]
    NegativeDuration(f64),
    #[error("covariance left its invariant set (log argument {argument} at omega0={omega0}, w={w})")]
    InvariantViolation { omega0: f64, w: f64, argument: f64 },
    #[error("matrix propagation failed: {0}")]
    Matrix(String),
}

/// Sensing mode of a target over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Active,
    Inactive,
}

impl Mode {
    pub fn eta(self) -> f64 {
        match self {
            Mode::Active => 1.0,
            Mode::Inactive => 0.0,
        }
    }
}

/// Integral of `Ω` over an interval, split by mode.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContributionBreakdown {
    pub j_active: f64,
    pub j_inactive: f64,
}

impl ContributionBreakdown {
    pub fn total(&self) -> f64 {
        self.j_active + self.j_inactive
    }

    pub fn add(&mut self, mode: Mode, area: f64) {
        match mode {
            Mode::Active => self.j_active += area,
            Mode::Inactive => self.j_inactive += area,
        }
    }
}

/// Scalar Riccati dynamics of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    pub a: f64,
    pub q: f64,
    pub g: f64,
    pub derived: TargetDerived,
}

impl Dynamics {
    pub fn new(a: f64, q: f64, g: f64) -> Self {
        Dynamics {
            a,
            q,
            g,
            derived: TargetDerived::new(a, q, g),
        }
    }

    pub fn from_params(p: &TargetParams) -> Self {
        Self::new(p.a, p.q, p.g())
    }

    pub fn lambda(&self) -> f64 {
        self.derived.lambda
    }

    pub fn omega_ss(&self) -> f64 {
        self.derived.omega_ss
    }

    pub fn omega_bar_ss(&self) -> f64 {
        self.derived.omega_bar_ss
    }

    /// `(Ω_ss, Ω̄_ss)`.
    pub fn steady_states(&self) -> (f64, f64) {
        (self.derived.omega_ss, self.derived.omega_bar_ss)
    }

    fn singular(&self) -> bool {
        self.a.abs() < SINGULAR_A
    }

    /// Covariance after `w` seconds of sensing.
    ///
    /// With `δ = Ω − Ω_ss` the Riccati equation becomes the Bernoulli
    /// equation `δ' = −λδ − Gδ²`, whose solution
    /// `δ(w) = δ₀e^{−λw} / (1 + (Gδ₀/λ)(1 − e^{−λw}))` is algebraically the
    /// two-root form `(c₁ + c₂e^{−λw}) / (v₁c₁ + v₂c₂e^{−λw})`.
    pub fn propagate_active(&self, omega0: f64, w: f64) -> Result<f64, CovarianceError> {
        check(omega0, w)?;
        let (delta0, k, decay) = self.active_terms(omega0, w);
        if delta0 == 0.0 {
            return Ok(self.omega_ss());
        }
        let v = self.omega_ss() + delta0 * decay / (1.0 + k * (-(-self.lambda() * w).exp_m1()));
        Ok(clamp_between(v, omega0, self.omega_ss()))
    }

    fn active_terms(&self, omega0: f64, w: f64) -> (f64, f64, f64) {
        let delta0 = omega0 - self.omega_ss();
        (delta0, self.g * delta0 / self.lambda(), (-self.lambda() * w).exp())
    }

    /// `∫₀ʷ Ω dt` while sensing: `Ω_ss·w + (1/G)·ln(1 + (Gδ₀/λ)(1 − e^{−λw}))`.
    pub fn contribution_active(&self, omega0: f64, w: f64) -> Result<f64, CovarianceError> {
        check(omega0, w)?;
        let (_, k, _) = self.active_terms(omega0, w);
        let x = k * (-(-self.lambda() * w).exp_m1());
        if !(x > -1.0) {
            return Err(CovarianceError::InvariantViolation {
                omega0,
                w,
                argument: 1.0 + x,
            });
        }
        Ok(self.omega_ss() * w + x.ln_1p() / self.g)
    }

    /// Covariance after `w` seconds unobserved:
    /// `(Ω₀ + Q/2A)e^{2Aw} − Q/2A`, limit `Ω₀ + Qw` as `A → 0`.
    pub fn propagate_inactive(&self, omega0: f64, w: f64) -> Result<f64, CovarianceError> {
        check(omega0, w)?;
        if self.singular() {
            return Ok(omega0 + self.q * w);
        }
        let x = 2.0 * self.a * w;
        Ok(omega0 * x.exp() + self.q * w * phi1(x))
    }

    /// `∫₀ʷ Ω dt` while unobserved:
    /// `(1/2A)(Ω₀ + Q/2A)(e^{2Aw} − 1) − (Q/2A)w`, limit `Ω₀w + Qw²/2`.
    pub fn contribution_inactive(&self, omega0: f64, w: f64) -> Result<f64, CovarianceError> {
        check(omega0, w)?;
        if self.singular() {
            return Ok(omega0 * w + 0.5 * self.q * w * w);
        }
        let x = 2.0 * self.a * w;
        Ok(omega0 * w * phi1(x) + self.q * w * w * phi2(x))
    }

    pub fn propagate(&self, mode: Mode, omega0: f64, w: f64) -> Result<f64, CovarianceError> {
        match mode {
            Mode::Active => self.propagate_active(omega0, w),
            Mode::Inactive => self.propagate_inactive(omega0, w),
        }
    }

    pub fn contribution(&self, mode: Mode, omega0: f64, w: f64) -> Result<f64, CovarianceError> {
        match mode {
            Mode::Active => self.contribution_active(omega0, w),
            Mode::Inactive => self.contribution_inactive(omega0, w),
        }
    }

    /// Right-hand side of the Riccati equation.
    pub fn rate(&self, mode: Mode, omega: f64) -> f64 {
        2.0 * self.a * omega + self.q - mode.eta() * self.g * omega * omega
    }

    /// Sensing time needed to bring `omega0` down to `threshold`, or 0 when
    /// it is already there. `threshold` must exceed `Ω_ss`.
    pub fn active_time_to_reach(&self, omega0: f64, threshold: f64) -> Result<f64, CovarianceError> {
        check(omega0, 0.0)?;
        if omega0 <= threshold {
            return Ok(0.0);
        }
        let d0 = omega0 - self.omega_ss();
        let d1 = threshold - self.omega_ss();
        if !(d1 > 0.0) {
            return Ok(f64::INFINITY);
        }
        // Invert δ(w) = δ₀e / (1 + k(1 − e)) for e = e^{−λw}.
        let k = self.g / self.lambda();
        let e = d1 * (1.0 + k * d0) / (d0 * (1.0 + k * d1));
        Ok(-e.ln() / self.lambda())
    }
}

fn check(omega0: f64, w: f64) -> Result<(), CovarianceError> {
    if !(omega0 > 0.0) {
        return Err(CovarianceError::NonPositiveOmega(omega0));
    }
    if !(w >= 0.0) {
        return Err(CovarianceError::NegativeDuration(w));
    }
    Ok(())
}

/// Keeps a rounding-perturbed active value on the segment it must lie on.
fn clamp_between(v: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    v.clamp(lo, hi)
}

/// `(e^x − 1)/x`.
fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// `(e^x − 1 − x)/x²`.
fn phi2(x: f64) -> f64 {
    if x.abs() < PHI2_SERIES_CUTOFF {
        0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0))
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// Matrix Riccati propagation `Ω̇ = AΩ + ΩAᵀ + Q − ηΩGΩ` over `w` seconds
/// via the linear Hamiltonian system: `[C; D] = e^{Ψw}[Ω₀; I]`,
/// `Ψ = [[A, Q], [ηG, −Aᵀ]]`, `Ω = C·D⁻¹`.
pub fn propagate_matrix(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    omega0: &DMatrix<f64>,
    mode: Mode,
    w: f64,
) -> Result<DMatrix<f64>, CovarianceError> {
    let n = a.nrows();
    for (name, m) in [("A", a), ("Q", q), ("G", g), ("Omega0", omega0)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(CovarianceError::Matrix(format!("{name} must be {n}x{n}")));
        }
    }
    if !(w >= 0.0) {
        return Err(CovarianceError::NegativeDuration(w));
    }
    let mut psi = DMatrix::zeros(2 * n, 2 * n);
    psi.view_mut((0, 0), (n, n)).copy_from(a);
    psi.view_mut((0, n), (n, n)).copy_from(q);
    psi.view_mut((n, 0), (n, n)).copy_from(&(g * mode.eta()));
    psi.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let phi = (psi * w).exp();
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(omega0);
    stacked.view_mut((n, 0), (n, n)).fill_with_identity();
    let cd = phi * stacked;
    let c = cd.rows(0, n).into_owned();
    let d = cd.rows(n, n).into_owned();
    let lu = d.lu();
    if lu.determinant().abs() < f64::EPSILON {
        return Err(CovarianceError::Matrix("D is singular".into()));
    }
    let d_inv = lu
        .try_inverse()
        .ok_or_else(|| CovarianceError::Matrix("D is singular".into()))?;
    Ok(c * d_inv)
}
