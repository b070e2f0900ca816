//! Projected gradient descent with Armijo backtracking.

/// Line search and termination constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdSettings {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    /// Trial step when no curvature estimate is available: this multiple of
    /// the last accepted step.
    pub expand: f64,
    /// Use the Barzilai-Borwein step `sᵀs/sᵀy` from the last move as the
    /// trial step when it is positive.
    pub spectral: bool,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub min_step: f64,
}

impl Default for PgdSettings {
    fn default() -> Self {
        PgdSettings {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            expand: 2.0,
            spectral: true,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdResult<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub iterations: usize,
    /// Norm of `x − P(x − ∇f(x))` at the returned point.
    pub stationarity: f64,
    /// False when the iteration budget ran out before a stopping test fired.
    pub converged: bool,
}

/// Minimizes `f` over the convex set onto which `project` maps, starting
/// from `x0`. `f` returns the value and gradient.
pub fn minimize<const N: usize>(
    f: impl Fn(&[f64; N]) -> (f64, [f64; N]),
    project: impl Fn([f64; N]) -> [f64; N],
    x0: [f64; N],
    settings: &PgdSettings,
) -> PgdResult<N> {
    let mut x = project(x0);
    let (mut fx, mut g) = f(&x);
    let mut trial = settings.initial_step;
    let mut iterations = 0;
    loop {
        let pg = stationarity(&x, &g, &project);
        if pg <= settings.gradient_tolerance {
            return PgdResult { x, value: fx, iterations, stationarity: pg, converged: true };
        }
        if iterations >= settings.max_iterations {
            return PgdResult { x, value: fx, iterations, stationarity: pg, converged: false };
        }
        iterations += 1;

        let mut trial_step = trial;
        let accepted = loop {
            let mut moved = x;
            for k in 0..N {
                moved[k] -= trial_step * g[k];
            }
            let candidate = project(moved);
            let directional: f64 = (0..N).map(|k| g[k] * (candidate[k] - x[k])).sum();
            let (fc, gc) = f(&candidate);
            if fc <= fx + settings.sufficient_decrease * directional {
                break Some((candidate, fc, gc));
            }
            trial_step *= settings.shrink;
            if trial_step < settings.min_step {
                break None;
            }
        };
        match accepted {
            Some((candidate, fc, gc)) => {
                let unchanged = candidate == x;
                let (mut ss, mut sy) = (0.0, 0.0);
                for k in 0..N {
                    let dx = candidate[k] - x[k];
                    ss += dx * dx;
                    sy += dx * (gc[k] - g[k]);
                }
                x = candidate;
                fx = fc;
                g = gc;
                trial = if settings.spectral && sy > 0.0 && ss > 0.0 {
                    (ss / sy).min(1e12)
                } else {
                    trial_step * settings.expand
                };
                if unchanged {
                    let pg = stationarity(&x, &g, &project);
                    return PgdResult { x, value: fx, iterations, stationarity: pg, converged: true };
                }
            }
            None => {
                let pg = stationarity(&x, &g, &project);
                return PgdResult { x, value: fx, iterations, stationarity: pg, converged: true };
            }
        }
    }
}

fn stationarity<const N: usize>(x: &[f64; N], g: &[f64; N], project: impl Fn([f64; N]) -> [f64; N]) -> f64 {
    let mut moved = *x;
    for k in 0..N {
        moved[k] -= g[k];
    }
    let p = project(moved);
    (0..N).map(|k| (x[k] - p[k]).powi(2)).sum::<f64>().sqrt()
}

/// Projection onto `[0, upper]`.
pub fn project_interval(x: f64, upper: f64) -> f64 {
    x.clamp(0.0, upper.max(0.0))
}

/// Euclidean projection onto `{u ≥ 0, u₀ + u₁ ≤ budget}`: clamp to the
/// quadrant, then if the sum is too large move orthogonally onto the
/// hypotenuse and clamp again.
pub fn project_triangle(u: [f64; 2], budget: f64) -> [f64; 2] {
    let budget = budget.max(0.0);
    let mut p = [u[0].max(0.0), u[1].max(0.0)];
    if p[0] + p[1] > budget {
        let shift = 0.5 * (u[0] + u[1] - budget);
        p = [u[0] - shift, u[1] - shift];
        if p[0] < 0.0 {
            p = [0.0, budget];
        } else if p[1] < 0.0 {
            p = [budget, 0.0];
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_projection(u: [f64; 2], budget: f64) -> [f64; 2] {
        let n = 400;
        let mut best = ([0.0, 0.0], f64::INFINITY);
        for a in 0..=n {
            for b in 0..=(n - a) {
                let p = [budget * a as f64 / n as f64, budget * b as f64 / n as f64];
                let d = (p[0] - u[0]).powi(2) + (p[1] - u[1]).powi(2);
                if d < best.1 {
                    best = (p, d);
                }
            }
        }
        best.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn triangle_projection_is_nearest_point(
            x in -5.0f64..10.0, y in -5.0f64..10.0, budget in 0.1f64..8.0
        ) {
            let p = project_triangle([x, y], budget);
            prop_assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= budget + 1e-12);
            let q = brute_force_projection([x, y], budget);
            let dp = (p[0] - x).hypot(p[1] - y);
            let dq = (q[0] - x).hypot(q[1] - y);
            prop_assert!(dp <= dq + 1e-12);
            prop_assert!((p[0] - q[0]).hypot(p[1] - q[1]) <= 2.0 * budget / 400.0);
        }
    }

    #[test]
    fn quadratic_in_box() {
        let r = minimize(
            |x: &[f64; 1]| ((x[0] - 3.0).powi(2), [2.0 * (x[0] - 3.0)]),
            |x| [project_interval(x[0], 2.0)],
            [0.5],
            &PgdSettings::default(),
        );
        assert_eq!(r.x, [2.0]);
        assert!(r.converged);
        let r = minimize(
            |x: &[f64; 1]| ((x[0] - 1.25).powi(2), [2.0 * (x[0] - 1.25)]),
            |x| [project_interval(x[0], 2.0)],
            [0.0],
            &PgdSettings::default(),
        );
        assert!((r.x[0] - 1.25).abs() < 1e-8);
    }

    #[test]
    fn ill_scaled_quadratic_on_triangle() {
        let f = |x: &[f64; 2]| {
            let (a, b) = (x[0] - 0.7, x[1] - 0.2);
            (a * a + 25.0 * b * b, [2.0 * a, 50.0 * b])
        };
        let r = minimize(f, |u| project_triangle(u, 5.0), [1.0, 1.0], &PgdSettings::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.7).abs() < 1e-7 && (r.x[1] - 0.2).abs() < 1e-7);
    }
}
