//! k-means baseline: cluster the pooled symbols and report the fraction of
//! clusters that mix both documents.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSet, RowMatrix};
use crate::error::{Error, Result};
use crate::protocol::{self, SamplingProtocol};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k x dim`.
    pub centroids: RowMatrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step, starting with the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &RowMatrix, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    (0..points.rows())
        .into_par_iter()
        .map(|i| nearest(points.row(i), centroids))
        .unzip()
}

/// k-means++ seeding: first centre uniform, then proportional to the
/// squared distance to the closest chosen centre.
fn plus_plus(points: &RowMatrix, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Rounding can walk past the end; fall back to the last positive weight.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Iterates until the largest centroid shift drops below `tol` or
/// `max_iter` updates ran. Clusters left empty by an update are moved onto
/// the points farthest from their current centroid.
pub fn kmeans(
    points: &RowMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Param(format!("k must lie in 1..={n}, got {k}")));
    }
    if max_iter == 0 {
        return Err(Error::Param("max_iter must be >= 1".into()));
    }
    let dim = points.dim();
    let mut rng = rng::seeded(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let (mut assignment, mut dists) = assign(points, &centroids);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            sums[c]
                .iter_mut()
                .zip(points.row(i))
                .for_each(|(s, v)| *s += v);
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &cnt), old)| {
                if cnt == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / cnt as f64).collect()
                }
            })
            .collect();
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<usize> = (0..n).collect();
            far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            for (c, p) in empty.into_iter().zip(far) {
                next[c] = points.row(p).to_vec();
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        (assignment, dists) = assign(points, &centroids);
        history.push(dists.iter().sum());
        if shift < tol {
            break;
        }
    }
    Ok(KMeansResult {
        centroids: RowMatrix::new(k, dim, centroids.concat())?,
        assignment,
        inertia: *history.last().unwrap(),
        inertia_history: history,
        iterations,
    })
}

/// Fraction of non-empty clusters whose minority share exceeds
/// `minority_threshold`. The minority share of a cluster is one minus the
/// share of its most frequent document.
pub fn mixed_cluster_ratio(
    assignment: &[usize],
    labels: &[usize],
    minority_threshold: f64,
) -> Result<f64> {
    if assignment.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} assignments for {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    if !(0.0..0.5).contains(&minority_threshold) {
        return Err(Error::Param(format!(
            "minority threshold must lie in [0, 0.5), got {minority_threshold}"
        )));
    }
    let clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let docs = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; clusters * docs];
    for (&c, &l) in assignment.iter().zip(labels) {
        counts[c * docs + l] += 1;
    }
    let mut nonempty = 0usize;
    let mut mixed = 0usize;
    for hist in counts.chunks_exact(docs.max(1)) {
        let size: usize = hist.iter().sum();
        if size == 0 {
            continue;
        }
        nonempty += 1;
        let top = *hist.iter().max().unwrap();
        let minority = (size - top) as f64 / size as f64;
        if minority > minority_threshold {
            mixed += 1;
        }
    }
    Ok(if nonempty == 0 {
        0.0
    } else {
        mixed as f64 / nonempty as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub kmeans_k: usize,
    pub minority_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub protocol: SamplingProtocol,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            kmeans_k: 60,
            minority_threshold: 0.1,
            max_iter: 300,
            tol: 1e-6,
            protocol: SamplingProtocol::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub per_run: Vec<f64>,
    pub mean_ratio: f64,
}

/// Offset separating k-means seeds from sampling seeds.
const KMEANS_STREAM: u64 = 1 << 32;

pub fn baseline_run(
    a: &FeatureSet,
    b: &FeatureSet,
    params: &BaselineParams,
    run: usize,
) -> Result<f64> {
    let pool = protocol::prepare_pool(a, b, &params.protocol, run)?;
    let seed = rng::derive_seed(params.protocol.seed, KMEANS_STREAM + run as u64);
    let km = kmeans(
        &pool.vectors,
        params.kmeans_k,
        seed,
        params.max_iter,
        params.tol,
    )?;
    mixed_cluster_ratio(&km.assignment, &pool.labels, params.minority_threshold)
}

/// Mean mixed-cluster ratio over the protocol's runs.
pub fn compare_baseline(
    a: &FeatureSet,
    b: &FeatureSet,
    params: &BaselineParams,
) -> Result<BaselineComparison> {
    params.protocol.validate()?;
    let per_run: Vec<f64> = (0..params.protocol.runs)
        .into_par_iter()
        .map(|run| baseline_run(a, b, params, run))
        .collect::<Result<_>>()?;
    let mean_ratio = per_run.iter().sum::<f64>() / per_run.len() as f64;
    Ok(BaselineComparison {
        per_run,
        mean_ratio,
    })
}
