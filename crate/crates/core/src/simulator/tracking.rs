//! Target state, its Kalman-Bucy estimate and the local tracking control
//! law, integrated on a fixed grid once the covariance trajectory is known.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Segment;
use crate::covariance::Dynamics;
use crate::network::TargetParams;

/// Reference `r(t) = amplitude·sin(frequency·t + phase_per_target·i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineReference {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase_per_target: f64,
}

impl SineReference {
    pub fn value(&self, target: usize, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase_per_target * target as f64).sin()
    }

    pub fn derivative(&self, target: usize, t: f64) -> f64 {
        self.amplitude * self.frequency * (self.frequency * t + self.phase_per_target * target as f64).cos()
    }
}

/// Output map `y = Cφ + D`, error dynamics gain `K` and the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub c: f64,
    pub d: f64,
    pub k: f64,
    pub reference: SineReference,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            c: 1.0,
            d: 0.0,
            k: 2.0,
            reference: SineReference { amplitude: 10.0, frequency: 2.0, phase_per_target: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    pub config: TrackingConfig,
    /// Integration step.
    pub dt: f64,
    /// Feed the true state to the control law instead of the estimate.
    pub oracle: bool,
    /// Apply the tracking control law; otherwise `υ = 0`.
    pub control: bool,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        TrackingOptions { config: TrackingConfig::default(), dt: 1e-3, oracle: false, control: true }
    }
}

/// Tracking control input
/// `υ = −(C(A+K)φ̂ + K·D − (ṙ + K·r)) / (B·C)`, which gives `ė = −K·e`
/// when `φ̂ = φ` and there is no process noise.
pub fn tracking_control(p: &TargetParams, cfg: &TrackingConfig, state: f64, r: f64, r_dot: f64) -> f64 {
    -(cfg.c * (p.a + cfg.k) * state + cfg.k * cfg.d - (r_dot + cfg.k * r)) / (p.b * cfg.c)
}

/// True state `φ` and estimate `φ̂` of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthEstimator {
    pub phi: f64,
    pub phi_hat: f64,
}

impl TruthEstimator {
    /// One Euler-Maruyama step of length `dt`.
    ///
    /// `dw` is the process-noise increment (variance `Q·dt`), `dv` the
    /// observation-noise increment (variance `R·dt`) of the integrated
    /// measurement `dy = Hφ dt + dv`. The estimate follows
    /// `dφ̂ = (Aφ̂ + Bυ)dt + η(ΩH/R)(dy − Hφ̂ dt)`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(&mut self, p: &TargetParams, control: f64, omega: f64, eta: f64, dt: f64, dw: f64, dv: f64) {
        let dy = p.h * self.phi * dt + dv;
        let gain = eta * omega * p.h / p.r;
        let phi = self.phi + (p.a * self.phi + p.b * control) * dt + dw;
        let phi_hat = self.phi_hat + (p.a * self.phi_hat + p.b * control) * dt + gain * (dy - p.h * self.phi_hat * dt);
        self.phi = phi;
        self.phi_hat = phi_hat;
    }
}

/// Per-target tracking outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTracking {
    /// `(1/T)∫|e| dt` (trapezoid on the integration grid).
    pub j_c: f64,
    /// `e` at the requested sample times.
    pub error_samples: Vec<f64>,
    pub final_state: TruthEstimator,
}

/// Integrates one target over `[0, horizon]` along its covariance
/// trajectory `segments`. The target starts on its reference with the
/// estimate error drawn from `N(0, Ω(0))`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_target(
    target: usize,
    p: &TargetParams,
    segments: &[Segment],
    horizon: f64,
    options: &TrackingOptions,
    sample_times: &[f64],
    seed: u64,
) -> TargetTracking {
    let cfg = &options.config;
    let dynamics = Dynamics::from_params(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(target as u64 + 1);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let n = (horizon / options.dt).ceil().max(1.0) as usize;
    let dt = horizon / n as f64;
    let omega0 = segments.first().map_or(0.0, |s| s.omega0);
    let start = (cfg.reference.value(target, 0.0) - cfg.d) / cfg.c;
    let mut s = TruthEstimator { phi: start + omega0.sqrt() * normal(), phi_hat: start };

    let error = |s: &TruthEstimator, t: f64| cfg.c * s.phi + cfg.d - cfg.reference.value(target, t);
    let mut seg = 0;
    let mut next_sample = 0;
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut integral = 0.0;
    let mut prev_abs = error(&s, 0.0).abs();
    for step in 0..=n {
        let t = step as f64 * dt;
        while next_sample < sample_times.len() && sample_times[next_sample] <= t + 0.5 * dt {
            samples.push(error(&s, t));
            next_sample += 1;
        }
        if step == n {
            break;
        }
        while seg + 1 < segments.len() && segments[seg].t1 <= t {
            seg += 1;
        }
        let (omega, eta) = match segments.get(seg) {
            Some(sg) => {
                let w = (t - sg.t0).max(0.0);
                (dynamics.propagate(sg.mode, sg.omega0, w).unwrap_or(sg.omega0), sg.mode.eta())
            }
            None => (0.0, 0.0),
        };
        let u = if options.control {
            let state = if options.oracle { s.phi } else { s.phi_hat };
            tracking_control(p, cfg, state, cfg.reference.value(target, t), cfg.reference.derivative(target, t))
        } else {
            0.0
        };
        let dw = (p.q * dt).sqrt() * normal();
        let dv = (p.r * dt).sqrt() * normal();
        s.step(p, u, omega, eta, dt, dw, dv);
        let abs = error(&s, t + dt).abs();
        integral += 0.5 * (prev_abs + abs) * dt;
        prev_abs = abs;
    }
    while samples.len() < sample_times.len() {
        samples.push(error(&s, horizon));
    }
    TargetTracking { j_c: integral / horizon, error_samples: samples, final_state: s }
}
