//! Learned next-visit selection.
//!
//! Each agent keeps, per target and per subproblem type, the local states
//! it has seen together with the next-visit target full RHC chose. Once
//! enough samples exist a small neural classifier is trained on them and
//! replaces the per-neighbor solves: the predicted neighbor is the only
//! one whose continuous subproblem is solved.

pub mod ann;

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::controllers::{Action, ControlError, Controller, ControllerReport, Decision, Rhc, Snapshot};
use crate::rhcp::{solve_arrival_for, solve_departure_for, LocalState, PgdSettings};

pub use ann::{argmax, Classifier, TrainOptions, TrainReport, HIDDEN_UNITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("cannot train on an empty data set")]
    EmptyDataset,
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("model import failed: {0}")]
    Import(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningOptions {
    /// Samples collected before the first training (`L`).
    pub dataset_size: usize,
    /// `L` used by the extended variant.
    pub extended_dataset_size: usize,
    /// Mismatch threshold `δ` above which RHC-AL falls back to full RHC.
    pub al_threshold: f64,
    /// RHC-AL retrains after this many new fallback samples.
    pub retrain_every: usize,
    /// RHC-AL keeps at most `max_dataset_factor·L` samples (oldest dropped).
    pub max_dataset_factor: usize,
    pub train: TrainOptions,
}

impl Default for LearningOptions {
    fn default() -> Self {
        LearningOptions {
            dataset_size: 25,
            extended_dataset_size: 75,
            al_threshold: 0.25,
            retrain_every: 5,
            max_dataset_factor: 4,
            train: TrainOptions::default(),
        }
    }
}

/// Which subproblem a sample or model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DecisionKind {
    Arrival,
    Departure,
}

/// Samples `(X_i, j*)` of one agent at one target for one subproblem type.
/// Features are the covariances of `i` followed by its graph neighbors in
/// ascending order; labels index into that neighbor list.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionDataset {
    pub neighbors: Vec<usize>,
    samples: VecDeque<(Vec<f64>, usize)>,
    capacity: usize,
}

impl DecisionDataset {
    pub fn new(neighbors: Vec<usize>, capacity: usize) -> Self {
        DecisionDataset { neighbors, samples: VecDeque::new(), capacity: capacity.max(1) }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample, evicting the oldest beyond capacity. Returns false
    /// when `chosen` is not one of the neighbors.
    pub fn push(&mut self, features: Vec<f64>, chosen: usize) -> bool {
        let Some(label) = self.neighbors.iter().position(|&k| k == chosen) else {
            return false;
        };
        self.samples.push_back((features, label));
        while self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
        true
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|(x, _)| x.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|&(_, y)| y).collect()
    }

    pub fn train(&self, options: &TrainOptions, seed: u64) -> Result<(Classifier, TrainReport), LearningError> {
        Classifier::train(&self.features(), &self.labels(), self.neighbors.len(), options, seed)
    }
}

/// Feature vector `X_i`: `Ω_i` then `Ω_k` for each graph neighbor.
pub fn local_features(i: usize, neighbors: &[usize], omega: &[f64]) -> Vec<f64> {
    std::iter::once(omega[i]).chain(neighbors.iter().map(|&k| omega[k])).collect()
}

/// `e = 1 − h`, the estimated probability that the chosen class is wrong.
pub fn mismatch_error(posterior_of_choice: f64) -> f64 {
    1.0 - posterior_of_choice
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Gate {
    /// Trust the classifier once trained (RHC-L).
    Never,
    /// Fall back to full RHC when the mismatch error exceeds the threshold
    /// (RHC-AL).
    Threshold(f64),
}

#[derive(Debug, Clone)]
struct Entry {
    dataset: DecisionDataset,
    model: Option<Classifier>,
    pending: usize,
    trainings: usize,
}

/// RHC whose next-visit choice is delegated to per-(agent, target, type)
/// classifiers after a data-collection phase.
#[derive(Debug, Clone)]
pub struct LearningController {
    name: String,
    gate: Gate,
    options: LearningOptions,
    rhc: Rhc,
    pgd: PgdSettings,
    seed: u64,
    entries: BTreeMap<(usize, usize, DecisionKind), Entry>,
    report: ControllerReport,
}

impl LearningController {
    pub fn rhc_l(options: LearningOptions, pgd: PgdSettings, seed: u64) -> Self {
        Self::build("rhc-l", Gate::Never, options, pgd, seed)
    }

    pub fn rhc_al(options: LearningOptions, pgd: PgdSettings, seed: u64) -> Self {
        let gate = Gate::Threshold(options.al_threshold);
        Self::build("rhc-al", gate, options, pgd, seed)
    }

    fn build(name: &str, gate: Gate, options: LearningOptions, pgd: PgdSettings, seed: u64) -> Self {
        LearningController {
            name: name.to_string(),
            gate,
            options,
            rhc: Rhc::new(pgd),
            pgd,
            seed,
            entries: BTreeMap::new(),
            report: ControllerReport::default(),
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Trained classifiers keyed by `(agent, target, kind)`.
    pub fn models(&self) -> impl Iterator<Item = ((usize, usize, DecisionKind), &Classifier)> {
        self.entries.iter().filter_map(|(k, e)| e.model.as_ref().map(|m| (*k, m)))
    }

    fn model_seed(&self, agent: usize, i: usize, kind: DecisionKind) -> u64 {
        let mut x = self.seed ^ ((agent as u64) << 40) ^ ((i as u64) << 8) ^ kind as u64;
        // splitmix64 finalizer to decorrelate nearby keys.
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }

    fn full(&self, kind: DecisionKind, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        match kind {
            DecisionKind::Arrival => self.rhc.plan_arrival(i, snap),
            DecisionKind::Departure => self.rhc.plan_departure(i, snap),
        }
    }

    fn decide(&mut self, kind: DecisionKind, agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        let reachable = snap.reachable_neighbors(i);
        if reachable.is_empty() {
            return Ok(Decision::wait());
        }
        let key = (agent, i, kind);
        let capacity = match self.gate {
            Gate::Never => self.options.dataset_size,
            Gate::Threshold(_) => self.options.dataset_size * self.options.max_dataset_factor.max(1),
        };
        let entry = self.entries.entry(key).or_insert_with(|| Entry {
            dataset: DecisionDataset::new(snap.graph.neighbor_slice(i).to_vec(), capacity),
            model: None,
            pending: 0,
            trainings: 0,
        });
        let features = local_features(i, &entry.dataset.neighbors, snap.omega);

        if let Some(model) = &entry.model {
            let h = model.posteriors(&features)?;
            // The classifier ranges over all graph neighbors; only those
            // currently uncovered and reachable are admissible.
            let (choice, p) = reachable
                .iter()
                .map(|&k| (k, h[entry.dataset.neighbors.iter().position(|&n| n == k).unwrap()]))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, (k, p)| if p > best.1 { (k, p) } else { best });
            let gated = match self.gate {
                Gate::Never => false,
                Gate::Threshold(delta) => mismatch_error(p) > delta,
            };
            if !gated {
                self.report.learned_decisions += 1;
                let state = LocalState::from_omega(i, snap.t, &reachable, snap.omega)?;
                let rho = snap.graph.rho(i, choice);
                let h_now = snap.horizon_now();
                let candidate = match kind {
                    DecisionKind::Arrival => solve_arrival_for(&state, snap.dynamics, choice, rho, h_now, &self.pgd)?,
                    DecisionKind::Departure => solve_departure_for(&state, snap.dynamics, choice, rho, h_now, &self.pgd)?,
                };
                let c = candidate.expect("reachable neighbors satisfy the horizon");
                let action = match kind {
                    DecisionKind::Arrival => Action::Dwell { dwell: c.u_i, next: Some(choice), next_dwell: c.u_j },
                    DecisionKind::Departure => Action::Depart { to: choice, dwell_there: c.u_j },
                };
                return Ok(Decision { action, solver_calls: 1, learned: true });
            }
            self.report.gate_fallbacks += 1;
        }

        let decision = self.full(kind, i, snap)?;
        self.report.full_decisions += 1;
        let chosen = match decision.action {
            Action::Dwell { next: Some(j), .. } | Action::Depart { to: j, .. } => Some(j),
            _ => None,
        };
        let seed = self.model_seed(agent, i, kind);
        let entry = self.entries.get_mut(&key).expect("entry inserted above");
        let collecting = entry.model.is_none() || matches!(self.gate, Gate::Threshold(_));
        if let (Some(j), true) = (chosen, collecting) {
            if entry.dataset.push(features, j) {
                entry.pending += 1;
                let due = if entry.model.is_none() {
                    entry.dataset.len() >= self.options.dataset_size
                } else {
                    entry.pending >= self.options.retrain_every
                };
                if due {
                    let (model, report) = entry.dataset.train(&self.options.train, seed.wrapping_add(entry.trainings as u64))?;
                    log::debug!(
                        "{}: trained agent {agent} target {i} {kind:?} on {} samples, loss {:.4} -> {:.4}",
                        self.name,
                        entry.dataset.len(),
                        report.initial_loss,
                        report.final_loss
                    );
                    entry.model = Some(model);
                    entry.pending = 0;
                    entry.trainings += 1;
                    self.report.trainings += 1;
                }
            }
        }
        Ok(decision)
    }
}

impl Controller for LearningController {
    fn name(&self) -> &str {
        &self.name
    }

    fn arrival(&mut self, agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        self.decide(DecisionKind::Arrival, agent, i, snap)
    }

    fn dwell_end(&mut self, agent: usize, i: usize, snap: &Snapshot) -> Result<Decision, ControlError> {
        self.decide(DecisionKind::Departure, agent, i, snap)
    }

    fn neighborhood_change(
        &mut self,
        agent: usize,
        i: usize,
        _changed: usize,
        _waiting: bool,
        snap: &Snapshot,
    ) -> Result<Option<Decision>, ControlError> {
        self.decide(DecisionKind::Arrival, agent, i, snap).map(Some)
    }

    fn report(&self) -> ControllerReport {
        self.report.clone()
    }
}
