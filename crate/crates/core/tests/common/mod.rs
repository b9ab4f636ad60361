//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

/// Mutual k-nearest-neighbour pairs from the full distance matrix.
pub fn brute_mutual_knn(points: &[Vec<f64>], k: usize) -> BTreeSet<(usize, usize)> {
    let n = points.len();
    let dist = |a: usize, b: usize| -> f64 {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
    };
    let neighbours: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            // Stable sort keeps index order among equal distances.
            others.sort_by(|&a, &b| dist(i, a).partial_cmp(&dist(i, b)).unwrap());
            others.into_iter().take(k).collect()
        })
        .collect();
    let mut out = BTreeSet::new();
    for i in 0..n {
        for &j in &neighbours[i] {
            if i < j && neighbours[j].contains(&i) {
                out.insert((i, j));
            }
        }
    }
    out
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    adj
}

fn bfs_dist(adj: &[Vec<usize>], s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].unwrap();
        for &y in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(d + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Every shortest path from `s` to `t`, listed explicitly as node sequences.
fn all_shortest_paths(adj: &[Vec<usize>], s: usize, t: usize) -> Vec<Vec<usize>> {
    let to_t = bfs_dist(adj, t);
    let Some(len) = to_t[s] else {
        return Vec::new();
    };
    let mut paths = Vec::new();
    let mut stack = vec![vec![s]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == t {
            paths.push(path);
            continue;
        }
        let remaining = len - (path.len() - 1);
        for &y in &adj[last] {
            if to_t[y] == Some(remaining - 1) {
                let mut next = path.clone();
                next.push(y);
                stack.push(next);
            }
        }
    }
    paths
}

/// Edge betweenness over unweighted shortest paths, each unordered node
/// pair contributing one unit split evenly across its shortest paths.
pub fn brute_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let adj = adjacency(n, edges);
    let mut score = vec![0.0; edges.len()];
    for s in 0..n {
        for t in s + 1..n {
            let paths = all_shortest_paths(&adj, s, t);
            if paths.is_empty() {
                continue;
            }
            let share = 1.0 / paths.len() as f64;
            for p in &paths {
                for w in p.windows(2) {
                    let key = (w[0].min(w[1]), w[0].max(w[1]));
                    let e = edges.iter().position(|&x| x == key).unwrap();
                    score[e] += share;
                }
            }
        }
    }
    score
}

/// Full Girvan-Newman removal sequence, recomputing betweenness from
/// scratch on the whole graph after every removal. Ties within a relative
/// 1e-9 go to the lexicographically smallest edge.
pub fn brute_girvan_newman_order(n: usize, edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut live: Vec<(usize, usize)> = edges.to_vec();
    live.sort();
    let mut order = Vec::new();
    while !live.is_empty() {
        let score = brute_betweenness(n, &live);
        let max = score.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let floor = max - 1e-9 * max.abs().max(1.0);
        let pick = (0..live.len()).find(|&i| score[i] >= floor).unwrap();
        order.push(live.remove(pick));
    }
    order
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// 8-connected components by breadth-first flood fill.
pub fn flood_fill_components(
    mask: &[bool],
    width: usize,
    height: usize,
) -> Vec<BTreeSet<(usize, usize)>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            comp.insert((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Share of samples whose nearest prototype is their true prototype.
pub fn nearest_prototype_accuracy(
    samples: &[&[f64]],
    truth: &[usize],
    prototypes: &[&[f64]],
) -> f64 {
    let hits = samples
        .iter()
        .zip(truth)
        .filter(|(s, &t)| {
            let best = (0..prototypes.len())
                .min_by(|&a, &b| {
                    let da: f64 = s
                        .iter()
                        .zip(prototypes[a])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    let db: f64 = s
                        .iter()
                        .zip(prototypes[b])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            best == t
        })
        .count();
    hits as f64 / samples.len() as f64
}

/// Closed-form entropy of a count histogram, in nats.
pub fn entropy_of(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    -counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| (c / total) * (c / total).ln())
        .sum::<f64>()
}
