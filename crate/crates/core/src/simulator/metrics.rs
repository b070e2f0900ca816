//! Global objectives, sampled series and their windowed variants.

use serde::{Deserialize, Serialize};

use super::DecisionRecord;
use crate::controllers::ControllerReport;

/// Version of every artifact schema written by [`super::artifacts`].
pub const ARTIFACT_SCHEMA: u32 = 1;

/// State of the whole network at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub omega: Vec<f64>,
    /// `Σ Ω_i` over targets that are active at `t`.
    pub active_omega: f64,
    /// `Σ_i ∫_0^t Ω_i` restricted to active intervals.
    pub cum_active: f64,
    /// `Σ_i ∫_0^t Ω_i`.
    pub cum_total: f64,
}

impl Sample {
    pub fn sum_omega(&self) -> f64 {
        self.omega.iter().sum()
    }

    /// Running objective `J_t = (1/t)∫_0^t ΣΩ`, continuous at `t = 0`.
    pub fn j(&self) -> f64 {
        if self.t > 0.0 {
            self.cum_total / self.t
        } else {
            self.sum_omega()
        }
    }

    /// Running alternative objective `Ĵ_t = −∫ΣηΩ / ∫ΣΩ`, continuous at `t = 0`.
    pub fn jhat(&self) -> f64 {
        if self.t > 0.0 && self.cum_total > 0.0 {
            -self.cum_active / self.cum_total
        } else if self.sum_omega() > 0.0 {
            -self.active_omega / self.sum_omega()
        } else {
            0.0
        }
    }
}

/// Instantaneous costs over the forward window `[t, t+Δ]`, clipped to the
/// last sample.
pub fn windowed(samples: &[Sample], window: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(samples.len());
    let mut k = 0;
    for (i, s) in samples.iter().enumerate() {
        k = k.max(i);
        while k + 1 < samples.len() && samples[k].t < s.t + window - 1e-9 {
            k += 1;
        }
        let e = &samples[k];
        let width = e.t - s.t;
        if width <= 0.0 {
            out.push((s.sum_omega(), if s.sum_omega() > 0.0 { -s.active_omega / s.sum_omega() } else { 0.0 }));
            continue;
        }
        let total = e.cum_total - s.cum_total;
        let active = e.cum_active - s.cum_active;
        out.push((total / width, if total > 0.0 { -active / total } else { 0.0 }));
    }
    out
}

/// Mean of `ΣΩ` over `[t0, t1]` computed from the accumulators at the two
/// samples nearest to the window ends.
pub fn window_mean_cost(samples: &[Sample], t0: f64, t1: f64) -> Option<f64> {
    let nearest = |t: f64| samples.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()));
    let (a, b) = (nearest(t0)?, nearest(t1)?);
    (b.t > a.t).then(|| (b.cum_total - a.cum_total) / (b.t - a.t))
}

/// Mean solver calls and wall time per decision taken in `[t0, t1]`.
pub fn window_decision_stats(decisions: &[DecisionRecord], t0: f64, t1: f64) -> Option<(f64, f64)> {
    let inside: Vec<_> = decisions.iter().filter(|d| d.time >= t0 && d.time <= t1).collect();
    if inside.is_empty() {
        return None;
    }
    let n = inside.len() as f64;
    let calls = inside.iter().map(|d| d.solver_calls as f64).sum::<f64>() / n;
    let wall = inside.iter().map(|d| d.wall_us).sum::<f64>() / n;
    Some((calls, wall))
}

/// End-of-mission summary document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub controller: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "J_T")]
    pub j_t: f64,
    #[serde(rename = "Jhat_T")]
    pub jhat_t: f64,
    #[serde(rename = "J_W")]
    pub j_w: f64,
    #[serde(rename = "J_C")]
    pub j_c: Option<f64>,
    pub decisions: usize,
    pub solver_calls: usize,
    pub learned_decisions: usize,
    /// Mean solver calls of classifier-driven decisions.
    pub calls_per_learned_decision: Option<f64>,
    /// Mean solver calls of the remaining (full) decisions.
    pub calls_per_full_decision: Option<f64>,
    pub trainings: usize,
    pub mean_solver_wall_us: f64,
    pub events: usize,
    pub max_occupancy: usize,
    /// Smallest `2AΩ + Q` seen at any event boundary.
    pub min_positivity_margin: f64,
}

#[allow(clippy::too_many_arguments)]
pub(super) fn summarize(
    controller: &str,
    seed: u64,
    horizon: f64,
    contributions: &[(f64, f64)],
    worst_omega: f64,
    j_c: Option<f64>,
    decisions: &[DecisionRecord],
    events: usize,
    max_occupancy: usize,
    min_margin: f64,
    report: &ControllerReport,
) -> Summary {
    let active: f64 = contributions.iter().map(|c| c.0).sum();
    let total: f64 = contributions.iter().map(|c| c.0 + c.1).sum();
    let wall = if decisions.is_empty() {
        0.0
    } else {
        decisions.iter().map(|d| d.wall_us).sum::<f64>() / decisions.len() as f64
    };
    let mean_calls = |learned: bool| {
        let picked: Vec<f64> =
            decisions.iter().filter(|d| d.learned == learned).map(|d| d.solver_calls as f64).collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    };
    Summary {
        schema: ARTIFACT_SCHEMA,
        controller: controller.to_string(),
        seed,
        horizon,
        j_t: if horizon > 0.0 { total / horizon } else { 0.0 },
        jhat_t: if total > 0.0 { -active / total } else { 0.0 },
        j_w: worst_omega,
        j_c,
        decisions: decisions.len(),
        solver_calls: decisions.iter().map(|d| d.solver_calls).sum(),
        learned_decisions: decisions.iter().filter(|d| d.learned).count(),
        calls_per_learned_decision: mean_calls(true),
        calls_per_full_decision: mean_calls(false),
        trainings: report.trainings,
        mean_solver_wall_us: wall,
        events,
        max_occupancy,
        min_positivity_margin: min_margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, cum: f64) -> Sample {
        Sample { t, omega: vec![1.0], active_omega: 0.0, cum_active: 0.0, cum_total: cum }
    }

    #[test]
    fn forward_window_is_clipped_at_the_end() {
        let s: Vec<_> = (0..=10).map(|k| sample(k as f64 * 0.1, k as f64 * 0.1)).collect();
        let w = windowed(&s, 0.5);
        assert_eq!(w.len(), s.len());
        for (j, _) in &w {
            assert!((j - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn running_objective_is_continuous_at_zero() {
        let s = Sample { t: 0.0, omega: vec![2.0, 3.0], active_omega: 2.0, cum_active: 0.0, cum_total: 0.0 };
        assert_eq!(s.j(), 5.0);
        assert!((s.jhat() + 0.4).abs() < 1e-15);
    }
}
