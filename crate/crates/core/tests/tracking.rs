use pmn_core::covariance::{Dynamics, Mode};
use pmn_core::network::TargetParams;
use pmn_core::simulator::tracking::{integrate_target, tracking_control, TrackingConfig, TrackingOptions, TruthEstimator};
use pmn_core::simulator::Segment;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn params(a: f64) -> TargetParams {
    TargetParams { id: 0, position: vec![0.0, 0.0], a, b: 0.3, q: 0.8, h: 1.0, r: 2.0 }
}

#[test]
fn noiseless_unobserved_open_loop_follows_the_exponential() {
    let p = TargetParams { q: 1e-12, r: 1e12, ..params(0.25) };
    let phi0 = 1.7;
    let mut s = TruthEstimator { phi: phi0, phi_hat: phi0 };
    let dt = 1e-4;
    for _ in 0..20_000 {
        s.step(&p, 0.0, 1.0, 0.0, dt, 0.0, 0.0);
    }
    assert_eq!(s.phi, s.phi_hat);
    let exact = phi0 * (0.25f64 * 2.0).exp();
    assert!((s.phi - exact).abs() < 1e-3 * exact, "{} vs {exact}", s.phi);
}

#[test]
fn estimation_error_variance_matches_the_steady_covariance() {
    let p = params(-0.2);
    let d = Dynamics::from_params(&p);
    let omega = d.omega_ss();
    let (dt, horizon) = (1e-3, 20.0);
    let n = (horizon / dt) as usize;
    let mut errors = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut s = TruthEstimator { phi: omega.sqrt() * normal(), phi_hat: 0.0 };
        for k in 0..n {
            let (dw, dv) = ((p.q * dt).sqrt() * normal(), (p.r * dt).sqrt() * normal());
            s.step(&p, 0.0, omega, 1.0, dt, dw, dv);
            if k >= n / 2 && k % 50 == 0 {
                errors.push(s.phi - s.phi_hat);
            }
        }
    }
    let m = errors.iter().sum::<f64>() / errors.len() as f64;
    let var = errors.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (errors.len() - 1) as f64;
    assert!((var - omega).abs() <= 0.2 * omega, "sample variance {var}, steady covariance {omega}");
}

/// Integrates `(φ, φ̂)` over `[0, 2]` with `steps` Euler-Maruyama steps,
/// driven by the fine Brownian increments `fine` summed in blocks.
fn path(p: &TargetParams, d: &Dynamics, cfg: &TrackingConfig, fine: &[(f64, f64)], steps: usize) -> (f64, f64) {
    let block = fine.len() / steps;
    let dt = 2.0 / steps as f64;
    let mut s = TruthEstimator { phi: 1.0, phi_hat: 0.0 };
    for k in 0..steps {
        let t = k as f64 * dt;
        let (dw, dv) = fine[k * block..(k + 1) * block].iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let omega = d.propagate(Mode::Active, 2.0, t).unwrap();
        let u = tracking_control(p, cfg, s.phi_hat, cfg.reference.value(0, t), cfg.reference.derivative(0, t));
        s.step(p, u, omega, 1.0, dt, dw, dv);
    }
    (s.phi, s.phi_hat)
}

#[test]
fn halving_the_step_halves_the_strong_error() {
    let p = params(0.3);
    let d = Dynamics::from_params(&p);
    let cfg = TrackingConfig::default();
    let fine_steps = 3200;
    let dt_fine = 2.0 / fine_steps as f64;
    let mut err = [0.0; 3];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let fine: Vec<(f64, f64)> = (0..fine_steps)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                ((p.q * dt_fine).sqrt() * a, (p.r * dt_fine).sqrt() * b)
            })
            .collect();
        let reference = path(&p, &d, &cfg, &fine, fine_steps);
        for (k, steps) in [50, 100, 200].into_iter().enumerate() {
            let (phi, phi_hat) = path(&p, &d, &cfg, &fine, steps);
            err[k] += (phi - reference.0).abs() + (phi_hat - reference.1).abs();
        }
    }
    let (r1, r2) = (err[0] / err[1], err[1] / err[2]);
    assert!(r1 > 1.6 && r1 < 2.6 && r2 > 1.6 && r2 < 2.6, "error ratios {r1}, {r2}");
}

#[test]
fn oracle_state_cost_falls_with_the_gain() {
    let p = params(0.2);
    let horizon = 20.0;
    let segments = [Segment { t0: 0.0, t1: horizon, mode: Mode::Inactive, omega0: 1.0 }];
    let mut last = f64::INFINITY;
    for k in [1.0, 2.0, 4.0, 8.0] {
        let options = TrackingOptions { config: TrackingConfig { k, ..TrackingConfig::default() }, oracle: true, ..TrackingOptions::default() };
        let out = integrate_target(0, &p, &segments, horizon, &options, &[0.0, horizon], 5);
        assert!(out.j_c < last, "K = {k}: {} !< {last}", out.j_c);
        last = out.j_c;
    }
}

#[test]
fn sampled_errors_follow_the_requested_times() {
    let p = params(-0.1);
    let segments = [
        Segment { t0: 0.0, t1: 1.0, mode: Mode::Active, omega0: 1.0 },
        Segment { t0: 1.0, t1: 3.0, mode: Mode::Inactive, omega0: 0.9 },
    ];
    let times = [0.0, 0.5, 1.0, 2.5, 3.0];
    let out = integrate_target(2, &p, &segments, 3.0, &TrackingOptions::default(), &times, 9);
    assert_eq!(out.error_samples.len(), times.len());
    assert!(out.j_c.is_finite() && out.j_c > 0.0);
    let again = integrate_target(2, &p, &segments, 3.0, &TrackingOptions::default(), &times, 9);
    assert_eq!(out, again);
}
