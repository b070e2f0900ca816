//! Target network topology, per-target parameters and random problem
//! configuration generation.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this magnitude a target's `A` is treated as zero by the closed forms.
pub const SINGULAR_A: f64 = 1e-9;

/// Regeneration budget for connected random layouts.
pub const CONNECTIVITY_RETRIES: usize = 100;

/// Schema version written into every configuration document.
pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("target {0} does not exist")]
    InvalidTarget(usize),
    #[error("invalid parameters for target {id}: {reason}")]
    InvalidParams { id: usize, reason: String },
    #[error("invalid problem configuration: {0}")]
    InvalidConfig(String),
    #[error("no connected layout found for seed {seed} after {attempts} attempts")]
    Unconnectable { seed: u64, attempts: usize },
}

/// Static description of one target: `dφ = (Aφ + Bυ)dt + dw`, `z = Hφ + v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub id: usize,
    #[serde(rename = "pos")]
    pub position: Vec<f64>,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Observation gain.
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl TargetParams {
    /// Sensing gain `H²/R`.
    pub fn g(&self) -> f64 {
        self.h * self.h / self.r
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |reason: &str| {
            Err(NetworkError::InvalidParams {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if !(self.q > 0.0) {
            return bad("Q must be positive");
        }
        if !(self.r > 0.0) {
            return bad("R must be positive");
        }
        if !(self.h != 0.0 && self.h.is_finite()) {
            return bad("observation gain must be nonzero");
        }
        if !self.a.is_finite() || !self.b.is_finite() {
            return bad("A and B must be finite");
        }
        if self.position.iter().any(|x| !x.is_finite()) {
            return bad("position must be finite");
        }
        Ok(())
    }

    /// True when `|A|` is small enough that the `1/A` closed forms are
    /// replaced by their limits.
    pub fn near_singular(&self) -> bool {
        self.a.abs() < SINGULAR_A
    }

    pub fn derived(&self) -> TargetDerived {
        TargetDerived::new(self.a, self.q, self.g())
    }
}

/// Quantities derived from `(A, Q, G)` that the closed forms use repeatedly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDerived {
    /// Active-mode decay rate `2√(A²+QG)`.
    pub lambda: f64,
    pub v1: f64,
    pub v2: f64,
    /// Covariance under permanent sensing.
    pub omega_ss: f64,
    /// Covariance under permanent neglect; `+∞` unless `A < 0`.
    pub omega_bar_ss: f64,
}

impl TargetDerived {
    pub fn new(a: f64, q: f64, g: f64) -> Self {
        let s = (a * a + q * g).sqrt();
        // (s - A)(s + A) = QG; pick the cancellation-free branch.
        let omega_ss = if a > 0.0 { (a + s) / g } else { q / (s - a) };
        let omega_bar_ss = if a < 0.0 { -q / (2.0 * a) } else { f64::INFINITY };
        TargetDerived {
            lambda: 2.0 * s,
            v1: 1.0 / omega_ss,
            v2: -(a + s) / q,
            omega_ss,
            omega_bar_ss,
        }
    }

    /// Whether `omega` lies in the positively invariant band
    /// `(Ω_ss, Ω̄_ss)` (or `(Ω_ss, ∞)` for `A ≥ 0`).
    pub fn in_invariant_band(&self, omega: f64) -> bool {
        omega > self.omega_ss && omega < self.omega_bar_ss
    }
}

/// Targets joined by straight trajectory segments traveled at unit speed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    targets: Vec<TargetParams>,
    adjacency: Vec<Vec<usize>>,
    rho: Vec<f64>,
}

impl NetworkGraph {
    /// Builds a graph from targets and undirected edges. Travel times are
    /// Euclidean edge lengths (unit agent speed).
    pub fn new(targets: Vec<TargetParams>, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        let m = targets.len();
        if m == 0 {
            return Err(NetworkError::InvalidConfig("network has no targets".into()));
        }
        for (idx, t) in targets.iter().enumerate() {
            if t.id != idx {
                return Err(NetworkError::InvalidConfig(format!(
                    "target at position {idx} has id {}",
                    t.id
                )));
            }
            t.validate()?;
        }
        let mut adjacency = vec![Vec::new(); m];
        let mut rho = vec![f64::INFINITY; m * m];
        for &(i, j) in edges {
            if i >= m {
                return Err(NetworkError::InvalidTarget(i));
            }
            if j >= m {
                return Err(NetworkError::InvalidTarget(j));
            }
            if i == j {
                return Err(NetworkError::InvalidConfig(format!("self loop at target {i}")));
            }
            let d = distance(&targets[i].position, &targets[j].position);
            if !(d > 0.0) {
                return Err(NetworkError::InvalidConfig(format!(
                    "targets {i} and {j} coincide; travel time must be positive"
                )));
            }
            rho[i * m + j] = d;
            rho[j * m + i] = d;
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        if m > 1 {
            if let Some(isolated) = adjacency.iter().position(Vec::is_empty) {
                return Err(NetworkError::InvalidConfig(format!("target {isolated} has no neighbors")));
            }
        }
        Ok(NetworkGraph {
            targets,
            adjacency,
            rho,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[TargetParams] {
        &self.targets
    }

    pub fn target(&self, i: usize) -> &TargetParams {
        &self.targets[i]
    }

    /// `N_i`, sorted ascending.
    pub fn neighbor_slice(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// `N_i`, or `N̄_i = N_i ∪ {i}` when `include_self` is set. Sorted.
    pub fn neighbors(&self, i: usize, include_self: bool) -> Result<Vec<usize>, NetworkError> {
        if i >= self.len() {
            return Err(NetworkError::InvalidTarget(i));
        }
        let mut out = self.adjacency[i].clone();
        if include_self {
            let pos = out.partition_point(|&k| k < i);
            out.insert(pos, i);
        }
        Ok(out)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rho(i, j).is_finite()
    }

    /// Travel time on edge `(i, j)`; `+∞` when there is no such edge.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.len() + j]
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.targets[i].position, &self.targets[j].position)
    }

    /// Breadth-first reachability from target 0.
    pub fn is_connected(&self) -> bool {
        is_connected(&self.adjacency)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn is_connected(adjacency: &[Vec<usize>]) -> bool {
    if adjacency.is_empty() {
        return true;
    }
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Upper bound on the RHCP planning horizon. Serialized as a number or the
/// string `"remaining"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanningHorizon {
    Fixed(f64),
    /// `H = T - t`, i.e. the rest of the mission.
    Remaining,
}

impl PlanningHorizon {
    pub fn at(&self, t: f64, mission_end: f64) -> f64 {
        match *self {
            PlanningHorizon::Fixed(h) => h,
            PlanningHorizon::Remaining => (mission_end - t).max(0.0),
        }
    }
}

impl std::str::FromStr for PlanningHorizon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("remaining") {
            return Ok(PlanningHorizon::Remaining);
        }
        match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(PlanningHorizon::Fixed(h)),
            _ => Err(format!("expected a positive number or `remaining`, got `{s}`")),
        }
    }
}

impl std::fmt::Display for PlanningHorizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanningHorizon::Fixed(h) => write!(f, "{h}"),
            PlanningHorizon::Remaining => f.write_str("remaining"),
        }
    }
}

impl Serialize for PlanningHorizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            PlanningHorizon::Fixed(h) => s.serialize_f64(h),
            PlanningHorizon::Remaining => s.serialize_str("remaining"),
        }
    }
}

impl<'de> Deserialize<'de> for PlanningHorizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(h) => Ok(PlanningHorizon::Fixed(h)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A complete persistent monitoring problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub graph: NetworkGraph,
    pub num_agents: usize,
    pub agent_starts: Vec<usize>,
    pub omega0: Vec<f64>,
    /// Mission length `T` (s).
    pub horizon_t: f64,
    pub planning_h: PlanningHorizon,
    pub rng_seed: u64,
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let m = self.graph.len();
        if self.num_agents > m {
            return Err(NetworkError::InvalidConfig(format!(
                "{} agents exceed {m} targets",
                self.num_agents
            )));
        }
        if self.agent_starts.len() != self.num_agents {
            return Err(NetworkError::InvalidConfig("one start target per agent required".into()));
        }
        let mut used = vec![false; m];
        for &s in &self.agent_starts {
            if s >= m {
                return Err(NetworkError::InvalidTarget(s));
            }
            if std::mem::replace(&mut used[s], true) {
                return Err(NetworkError::InvalidConfig(format!("two agents start at target {s}")));
            }
        }
        if self.omega0.len() != m || self.omega0.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(NetworkError::InvalidConfig("omega0 must hold one positive value per target".into()));
        }
        if !(self.horizon_t > 0.0) || !self.horizon_t.is_finite() {
            return Err(NetworkError::InvalidConfig("mission length T must be positive".into()));
        }
        if let PlanningHorizon::Fixed(h) = self.planning_h {
            if !(h > 0.0) {
                return Err(NetworkError::InvalidConfig("planning horizon H must be positive".into()));
            }
        }
        Ok(())
    }

    /// Whether every initial covariance lies inside its invariant band.
    pub fn satisfies_initial_band(&self) -> bool {
        self.graph
            .targets()
            .iter()
            .zip(&self.omega0)
            .all(|(t, &w)| t.derived().in_invariant_band(w))
    }

    pub fn to_document(&self) -> ConfigDocument {
        ConfigDocument {
            schema: CONFIG_SCHEMA,
            targets: self
                .graph
                .targets()
                .iter()
                .zip(&self.omega0)
                .map(|(t, &omega0)| TargetEntry {
                    params: t.clone(),
                    omega0,
                })
                .collect(),
            edges: self.graph.undirected_edges().into_iter().map(|(i, j)| [i, j]).collect(),
            agents: self.agent_starts.iter().map(|&start| AgentEntry { start }).collect(),
            t: self.horizon_t,
            h: self.planning_h,
            seed: self.rng_seed,
        }
    }

    pub fn from_document(doc: ConfigDocument) -> Result<Self, NetworkError> {
        if doc.schema != CONFIG_SCHEMA {
            return Err(NetworkError::InvalidConfig(format!("unsupported schema {}", doc.schema)));
        }
        let omega0 = doc.targets.iter().map(|t| t.omega0).collect();
        let targets = doc.targets.into_iter().map(|t| t.params).collect();
        let edges: Vec<_> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        let cfg = ProblemConfig {
            graph: NetworkGraph::new(targets, &edges)?,
            num_agents: doc.agents.len(),
            agent_starts: doc.agents.iter().map(|a| a.start).collect(),
            omega0,
            horizon_t: doc.t,
            planning_h: doc.h,
            rng_seed: doc.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("config document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let doc: ConfigDocument =
            serde_json::from_str(text).map_err(|e| NetworkError::InvalidConfig(e.to_string()))?;
        Self::from_document(doc)
    }
}

/// On-disk form of a [`ProblemConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub schema: u32,
    pub targets: Vec<TargetEntry>,
    pub edges: Vec<[usize; 2]>,
    pub agents: Vec<AgentEntry>,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "H")]
    pub h: PlanningHorizon,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    #[serde(flatten)]
    pub params: TargetParams,
    pub omega0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub start: usize,
}

/// Default mission length of a generated configuration (s).
pub const DEFAULT_T: f64 = 50.0;
/// Default fixed planning horizon of a generated configuration (s).
pub const DEFAULT_H: f64 = 10.0;

/// Samples a random connected configuration: positions `U[0,1]²`,
/// `A, B ~ U[0.01, 0.41]`, `Q ~ U[0.1, 2.1]`, `R ~ U[2, 10]`, `H = 1`, and
/// an edge between every pair closer than `sigma`. Initial covariances are
/// drawn inside each target's invariant band.
pub fn generate_pc(
    num_targets: usize,
    num_agents: usize,
    sigma: f64,
    seed: u64,
) -> Result<ProblemConfig, NetworkError> {
    if num_targets < 2 {
        return Err(NetworkError::InvalidConfig("at least two targets required".into()));
    }
    if num_agents < 1 || num_agents > num_targets {
        return Err(NetworkError::InvalidConfig(format!(
            "agent count must be in 1..={num_targets}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(NetworkError::InvalidConfig("sigma must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut layout = None;
    for _ in 0..CONNECTIVITY_RETRIES {
        let positions: Vec<Vec<f64>> = (0..num_targets)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); num_targets];
        for i in 0..num_targets {
            for j in i + 1..num_targets {
                if distance(&positions[i], &positions[j]) < sigma {
                    edges.push((i, j));
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        if is_connected(&adjacency) {
            layout = Some((positions, edges));
            break;
        }
    }
    let (positions, edges) = layout.ok_or(NetworkError::Unconnectable {
        seed,
        attempts: CONNECTIVITY_RETRIES,
    })?;

    let targets: Vec<TargetParams> = positions
        .into_iter()
        .enumerate()
        .map(|(id, position)| TargetParams {
            id,
            position,
            a: rng.random_range(0.01..0.41),
            b: rng.random_range(0.01..0.41),
            q: rng.random_range(0.1..2.1),
            h: 1.0,
            r: rng.random_range(2.0..10.0),
        })
        .collect();
    let omega0 = targets
        .iter()
        .map(|t| sample_initial_covariance(&t.derived(), &mut rng))
        .collect();
    let cfg = ProblemConfig {
        graph: NetworkGraph::new(targets, &edges)?,
        num_agents,
        agent_starts: (0..num_agents).collect(),
        omega0,
        horizon_t: DEFAULT_T,
        planning_h: PlanningHorizon::Fixed(DEFAULT_H),
        rng_seed: seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Draws from `(Ω_ss, Ω̄_ss)` for `A < 0`, `(Ω_ss, 10·Ω_ss]` otherwise.
fn sample_initial_covariance(d: &TargetDerived, rng: &mut impl Rng) -> f64 {
    if d.omega_bar_ss.is_finite() {
        loop {
            let u: f64 = rng.random();
            let w = d.omega_ss + u * (d.omega_bar_ss - d.omega_ss);
            if u > 0.0 && w > d.omega_ss && w < d.omega_bar_ss {
                return w;
            }
        }
    } else {
        let u = 1.0 - rng.random::<f64>();
        d.omega_ss + u * 9.0 * d.omega_ss
    }
}
