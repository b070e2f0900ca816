//! Centralized periodic planner: partition the targets among the agents by
//! spectral clustering, close each cluster into a visiting cycle with a
//! nearest-neighbor tour improved by 2-opt, and pick dwell times by a
//! golden-section search on the periodic steady state of the cycle.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::covariance::Dynamics;
use crate::network::{NetworkGraph, ProblemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MtspOptions {
    pub kmeans_restarts: usize,
    pub kmeans_iterations: usize,
    /// Search interval for the shared dwell scale (mean dwell, seconds).
    pub scale_range: (f64, f64),
    /// Coarse grid points used to bracket the golden-section search.
    pub bracket_points: usize,
    pub scale_tolerance: f64,
    /// Periods simulated when looking for the periodic steady state.
    pub max_periods: usize,
    /// Relative-to-`Ω_ss` settling band that defines each target's dwell
    /// weight.
    pub weight_epsilon: f64,
}

impl Default for MtspOptions {
    fn default() -> Self {
        MtspOptions {
            kmeans_restarts: 10,
            kmeans_iterations: 100,
            scale_range: (0.01, 20.0),
            bracket_points: 64,
            scale_tolerance: 1e-6,
            max_periods: 400,
            weight_epsilon: 0.075,
        }
    }
}

/// A closed walk over one cluster. Consecutive entries (cyclically) are
/// joined by edges; a target may appear more than once when the cluster
/// is not Hamiltonian, in which case only its first appearance carries a
/// dwell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub walk: Vec<usize>,
    pub dwell: Vec<f64>,
    /// The optimized dwell scale and the periodic peak covariance it gives.
    pub scale: f64,
    pub peak: f64,
}

impl Cycle {
    pub fn successor(&self, position: usize) -> usize {
        (position + 1) % self.walk.len()
    }

    /// Targets adjacent to any appearance of `target` on the walk.
    pub fn cycle_neighbors(&self, target: usize) -> Vec<usize> {
        let n = self.walk.len();
        let mut out = Vec::new();
        for (p, &k) in self.walk.iter().enumerate() {
            if k == target {
                out.push(self.walk[(p + 1) % n]);
                out.push(self.walk[(p + n - 1) % n]);
            }
        }
        out.retain(|&k| k != target);
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn targets(&self) -> Vec<usize> {
        let mut t = self.walk.clone();
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// One cycle per agent plus the walk position each agent starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleAssignment {
    pub cycles: Vec<Cycle>,
    pub start_position: Vec<usize>,
}

/// Plans cycles and dwell times for every agent of `config`.
pub fn mtsp_plan(config: &ProblemConfig, options: &MtspOptions, seed: u64) -> Result<CycleAssignment, ControlError> {
    let graph = &config.graph;
    let n_agents = config.num_agents;
    if n_agents == 0 {
        return Ok(CycleAssignment { cycles: Vec::new(), start_position: Vec::new() });
    }
    if !graph.is_connected() {
        return Err(ControlError::Planning("graph is not connected".into()));
    }
    let clusters = spectral_clusters(graph, n_agents, options, seed);
    let dynamics: Vec<Dynamics> = graph.targets().iter().map(Dynamics::from_params).collect();

    // Agents take the cluster holding their start; the rest are handed out
    // in order.
    let mut owner: Vec<Option<usize>> = vec![None; clusters.len()];
    for (a, &s) in config.agent_starts.iter().enumerate() {
        if let Some(c) = clusters.iter().position(|c| c.contains(&s)) {
            if owner[c].is_none() {
                owner[c] = Some(a);
            }
        }
    }
    let mut agent_cluster = vec![usize::MAX; n_agents];
    for (c, o) in owner.iter().enumerate() {
        if let Some(a) = o {
            agent_cluster[*a] = c;
        }
    }
    let mut free = (0..clusters.len()).filter(|&c| owner[c].is_none());
    for slot in agent_cluster.iter_mut().filter(|s| **s == usize::MAX) {
        *slot = free.next().expect("one cluster per agent");
    }

    let mut cycles = Vec::with_capacity(n_agents);
    let mut start_position = Vec::with_capacity(n_agents);
    for a in 0..n_agents {
        let cluster = &clusters[agent_cluster[a]];
        let walk = cycle_walk(graph, cluster);
        let weights = dwell_weights(&dynamics, &walk, options.weight_epsilon)?;
        let objective = |s: f64| cycle_peak(&dynamics, &config.omega0, graph, &walk, &weights, s, options.max_periods);
        let (scale, peak) = if walk.len() == 1 {
            (f64::INFINITY, dynamics[walk[0]].omega_ss())
        } else {
            golden_section_min(&objective, options.scale_range, options.bracket_points, options.scale_tolerance)
        };
        let dwell = weights.iter().map(|w| if walk.len() == 1 { f64::INFINITY } else { w * scale }).collect();
        let start = config.agent_starts[a];
        let pos = walk.iter().position(|&k| k == start).unwrap_or_else(|| {
            (0..walk.len())
                .min_by(|&p, &q| graph.distance(start, walk[p]).total_cmp(&graph.distance(start, walk[q])))
                .unwrap()
        });
        cycles.push(Cycle { walk, dwell, scale, peak });
        start_position.push(pos);
    }
    Ok(CycleAssignment { cycles, start_position })
}

fn similarity(graph: &NetworkGraph) -> DMatrix<f64> {
    let m = graph.len();
    let edges = graph.undirected_edges();
    let mean = edges.iter().map(|&(i, j)| graph.rho(i, j)).sum::<f64>() / edges.len().max(1) as f64;
    let mut w = DMatrix::zeros(m, m);
    for &(i, j) in &edges {
        let d = graph.rho(i, j);
        let s = (-d * d / (2.0 * mean * mean)).exp();
        w[(i, j)] = s;
        w[(j, i)] = s;
    }
    w
}

/// Normalized cut `Σ_c cut(c)/vol(c)` of a partition under the edge
/// similarity used for clustering.
pub fn normalized_cut(graph: &NetworkGraph, clusters: &[Vec<usize>]) -> f64 {
    let w = similarity(graph);
    let m = graph.len();
    let mut label = vec![usize::MAX; m];
    for (c, members) in clusters.iter().enumerate() {
        for &k in members {
            label[k] = c;
        }
    }
    clusters
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let (mut cut, mut vol) = (0.0, 0.0);
            for &i in members {
                for j in 0..m {
                    vol += w[(i, j)];
                    if label[j] != c {
                        cut += w[(i, j)];
                    }
                }
            }
            if vol > 0.0 {
                cut / vol
            } else {
                0.0
            }
        })
        .sum()
}

/// Partitions the targets into `k` nonempty clusters, each connected in the
/// graph, ordered by smallest member.
pub fn spectral_clusters(graph: &NetworkGraph, k: usize, options: &MtspOptions, seed: u64) -> Vec<Vec<usize>> {
    let m = graph.len();
    let k = k.clamp(1, m);
    let mut labels = if k == 1 {
        vec![0; m]
    } else {
        let w = similarity(graph);
        let deg: Vec<f64> = (0..m).map(|i| w.row(i).sum()).collect();
        let mut norm = w.clone();
        for i in 0..m {
            for j in 0..m {
                if norm[(i, j)] != 0.0 {
                    norm[(i, j)] /= (deg[i] * deg[j]).sqrt();
                }
            }
        }
        // Largest eigenvalues of D^{-1/2} W D^{-1/2} are the smallest of the
        // normalized Laplacian.
        let eig = SymmetricEigen::new(norm);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut rows: Vec<Vec<f64>> = (0..m).map(|i| order[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect()).collect();
        for r in &mut rows {
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                r.iter_mut().for_each(|x| *x /= n);
            }
        }
        kmeans(&rows, k, options, seed)
    };
    repair_connectivity(graph, &mut labels);
    fill_empty(graph, &mut labels, k);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        clusters[l].push(i);
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Lloyd iterations from k-means++ seeds; best inertia over restarts.
fn kmeans(points: &[Vec<f64>], k: usize, options: &MtspOptions, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b6d_6561_6e73);
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..options.kmeans_restarts.max(1) {
        let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
        while centers.len() < k {
            let d: Vec<f64> = points
                .iter()
                .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let pick = if total > 0.0 {
                let mut x = rng.random::<f64>() * total;
                let mut idx = d.len() - 1;
                for (i, &di) in d.iter().enumerate() {
                    if x < di {
                        idx = i;
                        break;
                    }
                    x -= di;
                }
                idx
            } else {
                rng.random_range(0..points.len())
            };
            centers.push(points[pick].clone());
        }
        let mut labels = vec![0; points.len()];
        for _ in 0..options.kmeans_iterations {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let l = (0..k).min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b]))).unwrap();
                if l != labels[i] {
                    labels[i] = l;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if !members.is_empty() {
                    for (d, x) in center.iter_mut().enumerate() {
                        *x = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-12) {
            best = Some((inertia, labels));
        }
    }
    best.unwrap().1
}

/// Components of the subgraph induced by `members`.
fn components(graph: &NetworkGraph, members: &[usize]) -> Vec<Vec<usize>> {
    let inside = |k: usize| members.contains(&k);
    let mut seen: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for &s in members {
        if seen.contains(&s) {
            continue;
        }
        let mut comp = vec![s];
        seen.push(s);
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for &j in graph.neighbor_slice(i) {
                if inside(j) && !seen.contains(&j) {
                    seen.push(j);
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Moves every component but the largest of each cluster to the adjacent
/// cluster reached by the shortest edge.
fn repair_connectivity(graph: &NetworkGraph, labels: &mut [usize]) {
    loop {
        let mut moved = false;
        let k = labels.iter().max().map_or(0, |&l| l + 1);
        for c in 0..k {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let mut comps = components(graph, &members);
            if comps.len() <= 1 {
                continue;
            }
            comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
            for orphan in &comps[1..] {
                let target = orphan
                    .iter()
                    .flat_map(|&i| graph.neighbor_slice(i).iter().map(move |&j| (i, j)))
                    .filter(|&(_, j)| labels[j] != c)
                    .min_by(|a, b| graph.rho(a.0, a.1).total_cmp(&graph.rho(b.0, b.1)).then(a.1.cmp(&b.1)));
                if let Some((_, j)) = target {
                    let new = labels[j];
                    for &i in orphan {
                        labels[i] = new;
                    }
                    moved = true;
                }
            }
            if moved {
                break;
            }
        }
        if !moved {
            return;
        }
    }
}

/// Makes labels `0..k` all nonempty by peeling non-cut targets (last BFS
/// vertex) off the largest clusters.
fn fill_empty(graph: &NetworkGraph, labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k.max(labels.iter().max().map_or(0, |&l| l + 1))];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = (0..k).find(|&c| sizes[c] == 0) else { return };
        let donor = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        if sizes[donor] < 2 {
            return;
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == donor).collect();
        let mut order = vec![members[0]];
        let mut queue = VecDeque::from([members[0]]);
        while let Some(i) = queue.pop_front() {
            for &j in graph.neighbor_slice(i) {
                if labels[j] == donor && !order.contains(&j) {
                    order.push(j);
                    queue.push_back(j);
                }
            }
        }
        labels[*order.last().unwrap()] = empty;
    }
}

/// Shortest paths inside `members` (Floyd-Warshall with next hops).
struct ClusterPaths {
    members: Vec<usize>,
    dist: Vec<Vec<f64>>,
    next: Vec<Vec<usize>>,
}

impl ClusterPaths {
    fn new(graph: &NetworkGraph, members: &[usize]) -> Self {
        let n = members.len();
        let mut dist = vec![vec![f64::INFINITY; n]; n];
        let mut next = vec![vec![usize::MAX; n]; n];
        for a in 0..n {
            dist[a][a] = 0.0;
            next[a][a] = a;
            for b in 0..n {
                if graph.has_edge(members[a], members[b]) {
                    dist[a][b] = graph.rho(members[a], members[b]);
                    next[a][b] = b;
                }
            }
        }
        for m in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let via = dist[a][m] + dist[m][b];
                    if via < dist[a][b] {
                        dist[a][b] = via;
                        next[a][b] = next[a][m];
                    }
                }
            }
        }
        ClusterPaths { members: members.to_vec(), dist, next }
    }

    /// Targets on the shortest path from local `a` to local `b`, excluding `b`.
    fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = a;
        while cur != b {
            out.push(self.members[cur]);
            cur = self.next[cur][b];
        }
        out
    }
}

/// Closed walk over a connected cluster: nearest-neighbor tour on the
/// shortest-path metric, 2-opt, then expanded into graph edges.
pub fn cycle_walk(graph: &NetworkGraph, cluster: &[usize]) -> Vec<usize> {
    let mut members = cluster.to_vec();
    members.sort_unstable();
    if members.len() <= 1 {
        return members;
    }
    let paths = ClusterPaths::new(graph, &members);
    let n = members.len();
    let d = &paths.dist;
    let mut tour = vec![0];
    let mut used = vec![false; n];
    used[0] = true;
    while tour.len() < n {
        let last = *tour.last().unwrap();
        let nxt = (0..n).filter(|&b| !used[b]).min_by(|&a, &b| d[last][a].total_cmp(&d[last][b])).unwrap();
        used[nxt] = true;
        tour.push(nxt);
    }
    let tour_len = |t: &[usize]| (0..t.len()).map(|k| d[t[k]][t[(k + 1) % t.len()]]).sum::<f64>();
    let mut improved = n >= 4;
    while improved {
        improved = false;
        for a in 1..n - 1 {
            for b in a + 1..n {
                let mut cand = tour.clone();
                cand[a..=b].reverse();
                if tour_len(&cand) < tour_len(&tour) - 1e-12 {
                    tour = cand;
                    improved = true;
                }
            }
        }
    }
    let mut walk = Vec::new();
    for k in 0..n {
        walk.extend(paths.path(tour[k], tour[(k + 1) % n]));
    }
    walk
}

/// Per-position dwell weights, normalized to mean 1 over the distinct
/// targets: the sensing time each target needs to settle from `2Ω_ss` to
/// `(1+ε)Ω_ss`. Repeat appearances get weight 0.
pub fn dwell_weights(dynamics: &[Dynamics], walk: &[usize], epsilon: f64) -> Result<Vec<f64>, ControlError> {
    let mut raw = Vec::with_capacity(walk.len());
    let mut seen = Vec::new();
    for &k in walk {
        if seen.contains(&k) {
            raw.push(0.0);
        } else {
            seen.push(k);
            let d = &dynamics[k];
            raw.push(d.active_time_to_reach(2.0 * d.omega_ss(), (1.0 + epsilon) * d.omega_ss())?);
        }
    }
    let mean = raw.iter().sum::<f64>() / seen.len().max(1) as f64;
    Ok(raw.into_iter().map(|w| if mean > 0.0 { w / mean } else { 1.0 }).collect())
}

/// Peak covariance on the cycle once the periodic regime is reached, for
/// dwell times `scale·weights`. Peaks occur at segment ends (covariances
/// are monotone within a segment), so boundaries suffice.
pub fn cycle_peak(
    dynamics: &[Dynamics],
    omega0: &[f64],
    graph: &NetworkGraph,
    walk: &[usize],
    weights: &[f64],
    scale: f64,
    max_periods: usize,
) -> f64 {
    let targets: Vec<usize> = {
        let mut t = walk.to_vec();
        t.sort_unstable();
        t.dedup();
        t
    };
    let mut omega: Vec<f64> = targets.iter().map(|&k| omega0[k]).collect();
    let local = |k: usize| targets.binary_search(&k).unwrap();
    let n = walk.len();
    let mut last_peak = f64::NAN;
    for _ in 0..max_periods.max(1) {
        let mut peak: f64 = omega.iter().copied().fold(0.0, f64::max);
        for p in 0..n {
            let here = local(walk[p]);
            let segments = [(Some(here), weights[p] * scale), (None, graph.rho(walk[p], walk[(p + 1) % n]))];
            for (active, w) in segments {
                for (idx, &k) in targets.iter().enumerate() {
                    let d = &dynamics[k];
                    let next = if active == Some(idx) {
                        d.propagate_active(omega[idx], w)
                    } else {
                        d.propagate_inactive(omega[idx], w)
                    };
                    match next {
                        Ok(v) if v.is_finite() && v < 1e12 => omega[idx] = v,
                        _ => return f64::INFINITY,
                    }
                    peak = peak.max(omega[idx]);
                }
            }
        }
        if (peak - last_peak).abs() <= 1e-12 * peak {
            return peak;
        }
        last_peak = peak;
    }
    last_peak
}

/// Minimizes `f` on `[lo, hi]`: a geometric grid locates the best bracket,
/// then golden-section search refines inside it.
pub fn golden_section_min(f: &dyn Fn(f64) -> f64, range: (f64, f64), points: usize, tol: f64) -> (f64, f64) {
    let (lo, hi) = range;
    let points = points.max(3);
    let ratio = (hi / lo).powf(1.0 / (points - 1) as f64);
    let grid: Vec<f64> = (0..points).map(|k| if k + 1 == points { hi } else { lo * ratio.powi(k as i32) }).collect();
    let values: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
    let b = (0..points).min_by(|&x, &y| values[x].total_cmp(&values[y]).then(x.cmp(&y))).unwrap();
    let (mut a, mut c) = (grid[b.saturating_sub(1)], grid[(b + 1).min(points - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = c - inv_phi * (c - a);
    let mut x2 = a + inv_phi * (c - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while c - a > tol * (1.0 + a.abs()) {
        if f1 <= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - inv_phi * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (c - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + c);
    let fm = f(mid);
    if fm <= values[b] {
        (mid, fm)
    } else {
        (grid[b], values[b])
    }
}
