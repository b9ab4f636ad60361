//! Mutual-kNN graph partitioning and the entropy-based similarity index.
//!
//! Two documents' symbols are pooled and linked by a mutual k-nearest
//! neighbour graph. Girvan–Newman edge removal then splits the graph one
//! component at a time; after every split the size-weighted Shannon
//! entropy of the document labels inside each component is recorded. The
//! normalized area under that curve is the similarity index: documents
//! whose symbols separate quickly score near 0, documents whose symbols
//! stay interleaved score near 1.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSet, PooledSample, RowMatrix};
use crate::error::{Error, Result};
use crate::protocol::{self, SamplingProtocol};

/// Undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    /// Euclidean distance between the endpoints.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutualKnnGraph {
    pub node_count: usize,
    pub k: usize,
    /// Sorted by `(u, v)`.
    pub edges: Vec<Edge>,
    /// Document label of every node.
    pub labels: Vec<usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact k nearest neighbours of every row, nearest first; equal distances
/// favour the smaller row index.
pub fn knn_lists(points: &RowMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.rows();
    if k == 0 || k >= n {
        return Err(Error::Param(format!("k must lie in 1..{n}, got {k}")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let here = points.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(here, points.row(j)), j))
                .collect();
            let by_key =
                |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_key);
                cand.truncate(k);
            }
            cand.sort_by(by_key);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// Builds the mutual-kNN graph over arbitrary points.
pub fn mutual_knn(points: &RowMatrix, labels: &[usize], k: usize) -> Result<MutualKnnGraph> {
    if labels.len() != points.rows() {
        return Err(Error::Input(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    let lists = knn_lists(points, k)?;
    let sorted: Vec<Vec<usize>> = lists
        .iter()
        .map(|l| {
            let mut s = l.clone();
            s.sort_unstable();
            s
        })
        .collect();
    let mut edges = Vec::new();
    for (u, nbrs) in sorted.iter().enumerate() {
        for &v in nbrs {
            if u < v && sorted[v].binary_search(&u).is_ok() {
                edges.push(Edge {
                    u,
                    v,
                    weight: squared_distance(points.row(u), points.row(v)).sqrt(),
                });
            }
        }
    }
    Ok(MutualKnnGraph {
        node_count: points.rows(),
        k,
        edges,
        labels: labels.to_vec(),
    })
}

/// Mutual-kNN graph over a pooled sample.
pub fn build_mutual_knn(pool: &PooledSample, k: usize) -> Result<MutualKnnGraph> {
    mutual_knn(&pool.vectors, &pool.labels, k)
}

/// Which edge Girvan–Newman removes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalRule {
    /// Highest edge betweenness over unweighted shortest paths.
    #[default]
    Betweenness,
    /// Largest Euclidean length.
    LongestEdge,
}

impl std::str::FromStr for RemovalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "betweenness" => Ok(RemovalRule::Betweenness),
            "longest-edge" | "longest_edge" => Ok(RemovalRule::LongestEdge),
            other => Err(Error::Param(format!("unknown removal rule `{other}`"))),
        }
    }
}

/// Scores within this relative distance of the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Index of the edge to remove: the maximum score, ties resolved toward
/// the first `(u, v)` in lexicographic order. `scores[e]` is ignored for
/// dead edges. Edges must be sorted.
pub fn pick_max(edges: &[Edge], alive: &[bool], scores: &[f64]) -> Option<usize> {
    let max = (0..edges.len())
        .filter(|&e| alive[e])
        .map(|e| scores[e])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let floor = max - TIE_TOLERANCE * max.abs().max(1.0);
    (0..edges.len()).find(|&e| alive[e] && scores[e] >= floor)
}

/// One recorded partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStep {
    /// Component id per node, numbered by smallest member.
    pub assignment: Vec<usize>,
    pub clusters: usize,
    pub global_entropy: f64,
    /// True for steps added after the graph ran out of edges.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTrace {
    /// Initial components followed by one entry per split; `m_steps + 1` long.
    pub steps: Vec<PartitionStep>,
    /// Every removed edge as `(u, v)`, in removal order.
    pub removed: Vec<(usize, usize)>,
}

impl PartitionTrace {
    pub fn entropy_curve(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.global_entropy).collect()
    }
}

/// Shannon entropy in nats of a label histogram.
pub fn cluster_entropy(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Input("entropy of an empty cluster".into()));
    }
    let total = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum())
}

/// Size-weighted mean of per-cluster label entropies.
pub fn global_entropy(assignment: &[usize], labels: &[usize]) -> Result<f64> {
    if assignment.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} assignments for {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let docs = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; clusters * docs];
    for (&c, &l) in assignment.iter().zip(labels) {
        counts[c * docs + l] += 1;
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    for hist in counts.chunks_exact(docs) {
        let size: usize = hist.iter().sum();
        if size > 0 {
            total += size as f64 / n * cluster_entropy(hist)?;
        }
    }
    Ok(total)
}

/// Mutable graph state for the partitioning loop.
struct Partitioner<'g> {
    graph: &'g MutualKnnGraph,
    adjacency: Vec<Vec<(usize, usize)>>,
    alive: Vec<bool>,
    alive_count: usize,
    component: Vec<usize>,
    component_count: usize,
    scores: Vec<f64>,
}

impl<'g> Partitioner<'g> {
    fn new(graph: &'g MutualKnnGraph, rule: RemovalRule) -> Self {
        let n = graph.node_count;
        let mut adjacency = vec![Vec::new(); n];
        for (id, e) in graph.edges.iter().enumerate() {
            adjacency[e.u].push((e.v, id));
            adjacency[e.v].push((e.u, id));
        }
        let mut p = Partitioner {
            graph,
            adjacency,
            alive: vec![true; graph.edges.len()],
            alive_count: graph.edges.len(),
            component: vec![usize::MAX; n],
            component_count: 0,
            scores: vec![0.0; graph.edges.len()],
        };
        for s in 0..n {
            if p.component[s] == usize::MAX {
                let id = p.component_count;
                p.component_count += 1;
                p.flood(s, id);
            }
        }
        match rule {
            RemovalRule::Betweenness => {
                let mut seen = vec![false; p.component_count];
                for s in 0..n {
                    let c = p.component[s];
                    if !seen[c] {
                        seen[c] = true;
                        let members = p.members(s);
                        p.rescore(&members);
                    }
                }
            }
            RemovalRule::LongestEdge => {
                for (e, edge) in graph.edges.iter().enumerate() {
                    p.scores[e] = edge.weight;
                }
            }
        }
        p
    }

    fn flood(&mut self, start: usize, id: usize) -> Vec<usize> {
        let mut members = vec![start];
        self.component[start] = id;
        let mut i = 0;
        while i < members.len() {
            let x = members[i];
            for &(y, e) in &self.adjacency[x] {
                if self.alive[e] && self.component[y] != id {
                    self.component[y] = id;
                    members.push(y);
                }
            }
            i += 1;
        }
        members
    }

    fn members(&self, start: usize) -> Vec<usize> {
        let id = self.component[start];
        let mut out: Vec<usize> = (0..self.graph.node_count)
            .filter(|&x| self.component[x] == id)
            .collect();
        out.sort_unstable();
        out
    }

    /// Recomputes betweenness of the alive edges inside `members`.
    fn rescore(&mut self, members: &[usize]) {
        let local_edges: Vec<usize> = {
            let mut es: Vec<usize> = members
                .iter()
                .flat_map(|&x| self.adjacency[x].iter())
                .filter(|&&(_, e)| self.alive[e])
                .map(|&(_, e)| e)
                .collect();
            es.sort_unstable();
            es.dedup();
            es
        };
        if local_edges.is_empty() {
            return;
        }
        let result = edge_betweenness(&self.adjacency, &self.alive, members, &local_edges);
        for (e, b) in local_edges.into_iter().zip(result) {
            self.scores[e] = b;
        }
    }

    fn remove(&mut self, e: usize, rule: RemovalRule) -> bool {
        self.alive[e] = false;
        self.alive_count -= 1;
        let Edge { u, v, .. } = self.graph.edges[e];
        let old = self.component[u];
        // Relabel the side holding `v`; if it still reaches `u` nothing split.
        let fresh = self.component_count;
        let side = self.flood(v, fresh);
        let split = self.component[u] != fresh;
        if split {
            self.component_count += 1;
        } else {
            for &x in &side {
                self.component[x] = old;
            }
        }
        if rule == RemovalRule::Betweenness {
            if split {
                let a = self.members(u);
                self.rescore(&a);
                let mut b = side;
                b.sort_unstable();
                self.rescore(&b);
            } else {
                let a = self.members(u);
                self.rescore(&a);
            }
        }
        split
    }

    fn snapshot(&self) -> (Vec<usize>, usize) {
        let mut relabel = vec![usize::MAX; self.component_count];
        let mut next = 0;
        let assignment = self
            .component
            .iter()
            .map(|&c| {
                if relabel[c] == usize::MAX {
                    relabel[c] = next;
                    next += 1;
                }
                relabel[c]
            })
            .collect();
        (assignment, next)
    }
}

/// Source blocks are reduced in a fixed order so results do not depend on
/// the thread count.
const SOURCE_BLOCK: usize = 32;

/// Brandes edge betweenness restricted to one connected component.
///
/// Each unordered node pair contributes once; `edges` lists the
/// component's alive edges and the result is aligned with it.
fn edge_betweenness(
    adjacency: &[Vec<(usize, usize)>],
    alive: &[bool],
    members: &[usize],
    edges: &[usize],
) -> Vec<f64> {
    let n = adjacency.len();
    let slot = |e: usize| edges.binary_search(&e).expect("edge outside component");
    let blocks: Vec<Vec<f64>> = members
        .par_chunks(SOURCE_BLOCK)
        .map(|sources| {
            let mut acc = vec![0.0; edges.len()];
            let mut dist = vec![usize::MAX; n];
            let mut sigma = vec![0.0f64; n];
            let mut delta = vec![0.0f64; n];
            let mut order = Vec::with_capacity(members.len());
            let mut queue = VecDeque::new();
            for &s in sources {
                for &x in &order {
                    dist[x] = usize::MAX;
                    sigma[x] = 0.0;
                    delta[x] = 0.0;
                }
                order.clear();
                dist[s] = 0;
                sigma[s] = 1.0;
                queue.push_back(s);
                while let Some(x) = queue.pop_front() {
                    order.push(x);
                    for &(y, e) in &adjacency[x] {
                        if !alive[e] {
                            continue;
                        }
                        if dist[y] == usize::MAX {
                            dist[y] = dist[x] + 1;
                            queue.push_back(y);
                        }
                        if dist[y] == dist[x] + 1 {
                            sigma[y] += sigma[x];
                        }
                    }
                }
                for &w in order.iter().rev() {
                    for &(v, e) in &adjacency[w] {
                        if alive[e] && dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                            let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                            acc[slot(e)] += c;
                            delta[v] += c;
                        }
                    }
                }
            }
            for &x in &order {
                dist[x] = usize::MAX;
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; edges.len()];
    for block in blocks {
        total.iter_mut().zip(block).for_each(|(t, b)| *t += b);
    }
    // Every pair was counted from both ends.
    total.iter_mut().for_each(|t| *t *= 0.5);
    total
}

/// Runs Girvan–Newman for `m_steps` splits, recording the partition and
/// its global entropy before the first removal and after every split.
///
/// When the graph runs out of edges early, the remaining steps repeat the
/// all-singleton partition (entropy 0) and are marked `padded`.
pub fn girvan_newman_trace(
    graph: &MutualKnnGraph,
    m_steps: usize,
    rule: RemovalRule,
) -> Result<PartitionTrace> {
    if m_steps == 0 {
        return Err(Error::Param("m_steps must be >= 1".into()));
    }
    let mut state = Partitioner::new(graph, rule);
    let record = |state: &Partitioner<'_>, padded: bool| -> Result<PartitionStep> {
        let (assignment, clusters) = state.snapshot();
        let global_entropy = global_entropy(&assignment, &graph.labels)?;
        Ok(PartitionStep {
            assignment,
            clusters,
            global_entropy,
            padded,
        })
    };
    let mut steps = vec![record(&state, false)?];
    let mut removed = Vec::new();
    while steps.len() <= m_steps {
        if state.alive_count == 0 {
            let tail = record(&state, true)?;
            while steps.len() <= m_steps {
                steps.push(tail.clone());
            }
            break;
        }
        loop {
            let e =
                pick_max(&graph.edges, &state.alive, &state.scores).expect("alive edge must exist");
            removed.push((graph.edges[e].u, graph.edges[e].v));
            if state.remove(e, rule) {
                break;
            }
        }
        steps.push(record(&state, false)?);
    }
    Ok(PartitionTrace { steps, removed })
}

/// Area under an entropy curve, normalized by its maximum possible value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiScore {
    pub raw_auc: f64,
    /// `raw_auc / (m_steps * h_prior)`, in `[0, 1]`.
    pub normalized: f64,
    pub h_prior: f64,
    pub m_steps: usize,
}

/// Trapezoidal area under the curve over unit-spaced iterations `0..=M`.
///
/// Curve values are saturated to `[0, h_prior]` first, so the normalized
/// score always lies in `[0, 1]`.
pub fn csi_from_curve(curve: &[f64], h_prior: f64) -> Result<CsiScore> {
    if !(h_prior > 0.0) || !h_prior.is_finite() {
        return Err(Error::Param(format!(
            "h_prior must be positive, got {h_prior}"
        )));
    }
    if curve.len() < 2 {
        return Err(Error::Param(
            "entropy curve needs at least two points".into(),
        ));
    }
    let m_steps = curve.len() - 1;
    let clamp = |v: f64| v.clamp(0.0, h_prior);
    let raw_auc: f64 = curve
        .windows(2)
        .map(|w| 0.5 * (clamp(w[0]) + clamp(w[1])))
        .sum();
    // Integrating the curve in units of h_prior keeps a saturated curve at exactly 1.
    let relative: f64 = curve
        .windows(2)
        .map(|w| 0.5 * (clamp(w[0]) / h_prior + clamp(w[1]) / h_prior))
        .sum();
    Ok(CsiScore {
        raw_auc,
        normalized: (relative / m_steps as f64).clamp(0.0, 1.0),
        h_prior,
        m_steps,
    })
}

pub fn csi(trace: &PartitionTrace, h_prior: f64) -> Result<CsiScore> {
    csi_from_curve(&trace.entropy_curve(), h_prior)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiParams {
    pub k: usize,
    pub m_steps: usize,
    pub removal: RemovalRule,
    pub protocol: SamplingProtocol,
}

impl Default for CsiParams {
    fn default() -> Self {
        Self {
            k: 10,
            m_steps: 50,
            removal: RemovalRule::Betweenness,
            protocol: SamplingProtocol::default(),
        }
    }
}

/// Result of comparing two documents over several sampling runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiComparison {
    pub per_run: Vec<CsiScore>,
    pub mean_csi: f64,
    /// Mean entropy curve across runs.
    pub entropy_curve: Vec<f64>,
    pub per_run_curves: Vec<Vec<f64>>,
}

/// One sampling run: pool, reduce, graph, partition, score.
pub fn csi_run(
    a: &FeatureSet,
    b: &FeatureSet,
    params: &CsiParams,
    run: usize,
) -> Result<(CsiScore, Vec<f64>)> {
    let pool = protocol::prepare_pool(a, b, &params.protocol, run)?;
    let h_prior = cluster_entropy(&pool.prior)?;
    let graph = build_mutual_knn(&pool, params.k)?;
    let trace = girvan_newman_trace(&graph, params.m_steps, params.removal)?;
    let curve = trace.entropy_curve();
    Ok((csi_from_curve(&curve, h_prior)?, curve))
}

/// Mean similarity index over `protocol.runs` independent runs.
pub fn compare_csi(a: &FeatureSet, b: &FeatureSet, params: &CsiParams) -> Result<CsiComparison> {
    params.protocol.validate()?;
    let runs: Vec<(CsiScore, Vec<f64>)> = (0..params.protocol.runs)
        .into_par_iter()
        .map(|run| csi_run(a, b, params, run))
        .collect::<Result<_>>()?;
    let count = runs.len() as f64;
    let mean_csi = runs.iter().map(|(s, _)| s.normalized).sum::<f64>() / count;
    let len = params.m_steps + 1;
    let mut entropy_curve = vec![0.0; len];
    for (_, curve) in &runs {
        entropy_curve
            .iter_mut()
            .zip(curve)
            .for_each(|(m, v)| *m += v / count);
    }
    let (per_run, per_run_curves) = runs.into_iter().unzip();
    Ok(CsiComparison {
        per_run,
        mean_csi,
        entropy_curve,
        per_run_curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points(xs: &[f64]) -> RowMatrix {
        let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        RowMatrix::from_rows(&rows).unwrap()
    }

    fn graph_from(n: usize, pairs: &[(usize, usize)], labels: Vec<usize>) -> MutualKnnGraph {
        let mut edges: Vec<Edge> = pairs
            .iter()
            .map(|&(a, b)| Edge {
                u: a.min(b),
                v: a.max(b),
                weight: 1.0,
            })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        MutualKnnGraph {
            node_count: n,
            k: 0,
            edges,
            labels,
        }
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(cluster_entropy(&[4]).unwrap(), 0.0);
        assert!((cluster_entropy(&[2, 2]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let want = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((cluster_entropy(&[3, 1]).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.562335).abs() < 1e-6);
        assert!(matches!(cluster_entropy(&[0, 0]), Err(Error::Input(_))));
        assert_eq!(cluster_entropy(&[0, 5]).unwrap(), 0.0);
    }

    #[test]
    fn global_entropy_examples() {
        // {A:2,B:2} and {A:4}
        let assignment = [0, 0, 0, 0, 1, 1, 1, 1];
        let labels = [0, 0, 1, 1, 0, 0, 0, 0];
        let h = global_entropy(&assignment, &labels).unwrap();
        assert!((h - 4.0 * std::f64::consts::LN_2 / 8.0).abs() < 1e-12);
        assert!((h - 0.346574).abs() < 1e-6);
        assert_eq!(global_entropy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 0.0);
        let h = global_entropy(&[0; 6], &[0, 1, 0, 1, 0, 1]).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(global_entropy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn one_dimensional_pairs() {
        let g = mutual_knn(&line_points(&[0.0, 1.0, 10.0, 11.0]), &[0; 4], 1).unwrap();
        let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3)]);
        assert_eq!(g.edges[0].weight, 1.0);
    }

    #[test]
    fn identical_points_and_complete_graph() {
        let g = mutual_knn(&line_points(&[3.0, 3.0]), &[0, 1], 1).unwrap();
        assert_eq!(g.edges.len(), 1);
        let pts = line_points(&[0.0, 0.5, 2.0, 7.0, 7.5]);
        let g = mutual_knn(&pts, &[0; 5], 4).unwrap();
        assert_eq!(g.edges.len(), 10);
        assert!(matches!(mutual_knn(&pts, &[0; 5], 5), Err(Error::Param(_))));
        assert!(matches!(mutual_knn(&pts, &[0; 5], 0), Err(Error::Param(_))));
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // Node 1 sits between 0 and 2 at equal distance.
        let lists = knn_lists(&line_points(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(lists[1], vec![0]);
    }

    #[test]
    fn bridge_goes_first() {
        let g = graph_from(
            6,
            &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)],
            vec![0, 0, 0, 1, 1, 1],
        );
        let trace = girvan_newman_trace(&g, 1, RemovalRule::Betweenness).unwrap();
        assert_eq!(trace.removed, vec![(2, 3)]);
        assert_eq!(trace.steps[0].clusters, 1);
        assert_eq!(trace.steps[1].clusters, 2);
        assert!((trace.steps[0].global_entropy - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(trace.steps[1].global_entropy, 0.0);
        assert_eq!(trace.steps[1].assignment, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn path_tie_removes_smallest_edge() {
        let g = graph_from(3, &[(0, 1), (1, 2)], vec![0, 1, 0]);
        let trace = girvan_newman_trace(&g, 1, RemovalRule::Betweenness).unwrap();
        assert_eq!(trace.removed, vec![(0, 1)]);
        assert_eq!(trace.steps[1].assignment, vec![0, 1, 1]);
    }

    #[test]
    fn edgeless_graph_pads() {
        let g = graph_from(4, &[], vec![0, 1, 0, 1]);
        let trace = girvan_newman_trace(&g, 3, RemovalRule::Betweenness).unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert!(trace
            .steps
            .iter()
            .all(|s| s.clusters == 4 && s.global_entropy == 0.0));
        assert!(trace.steps[1..].iter().all(|s| s.padded));
    }

    #[test]
    fn exhaustion_mid_trace() {
        let g = graph_from(3, &[(0, 1)], vec![0, 1, 0]);
        let trace = girvan_newman_trace(&g, 4, RemovalRule::Betweenness).unwrap();
        let clusters: Vec<usize> = trace.steps.iter().map(|s| s.clusters).collect();
        assert_eq!(clusters, vec![2, 3, 3, 3, 3]);
        assert!(!trace.steps[1].padded && trace.steps[2].padded);
        assert!(girvan_newman_trace(&g, 0, RemovalRule::Betweenness).is_err());
    }

    #[test]
    fn longest_edge_rule() {
        let mut g = graph_from(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 0, 1, 1]);
        g.edges[0].weight = 5.0;
        let trace = girvan_newman_trace(&g, 1, RemovalRule::LongestEdge).unwrap();
        assert_eq!(trace.removed, vec![(0, 1)]);
        let trace = girvan_newman_trace(&g, 1, RemovalRule::Betweenness).unwrap();
        assert_eq!(trace.removed, vec![(1, 2)]);
    }

    #[test]
    fn csi_anchors() {
        let h = std::f64::consts::LN_2;
        assert_eq!(csi_from_curve(&[0.0; 11], h).unwrap().normalized, 0.0);
        assert_eq!(csi_from_curve(&[h; 11], h).unwrap().normalized, 1.0);
        assert_eq!(csi_from_curve(&[h; 51], h).unwrap().normalized, 1.0);
        let linear: Vec<f64> = (0..=10).map(|i| h * (1.0 - i as f64 / 10.0)).collect();
        let s = csi_from_curve(&linear, h).unwrap();
        assert!((s.normalized - 0.5).abs() < 1e-9);
        assert!((s.raw_auc - 5.0 * h).abs() < 1e-12);
        assert_eq!(s.m_steps, 10);
        assert!(matches!(csi_from_curve(&linear, 0.0), Err(Error::Param(_))));
        assert!(csi_from_curve(&[0.1], h).is_err());
    }

    #[test]
    fn csi_saturates_above_prior() {
        let s = csi_from_curve(&[2.0, 2.0], 1.0).unwrap();
        assert_eq!(s.normalized, 1.0);
    }

    #[test]
    fn removal_rule_parse() {
        assert_eq!(
            "betweenness".parse::<RemovalRule>().unwrap(),
            RemovalRule::Betweenness
        );
        assert_eq!(
            "longest-edge".parse::<RemovalRule>().unwrap(),
            RemovalRule::LongestEdge
        );
        assert!("random".parse::<RemovalRule>().is_err());
    }
}
