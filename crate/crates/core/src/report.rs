//! Corpus-level orchestration: all-pairs similarity matrices with an
//! on-disk cache, z-normalization, agreement across feature sources and
//! nearest-document pairing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{compare_baseline, BaselineParams};
use crate::corpus::{encode_cfea, load_feature_file, Document, FeatureSet};
use crate::error::{Error, Result};
use crate::graphsim::{compare_csi, CsiParams, RemovalRule};
use crate::rng::{derive_seed, tag_of};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Csi,
    Baseline,
    Affinity,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Csi => "csi",
            Metric::Baseline => "baseline",
            Metric::Affinity => "affinity",
        }
    }
}

/// Pairwise document scores for one metric and feature source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub doc_ids: Vec<String>,
    /// `None` marks a cell that was not computed or failed.
    pub values: Vec<Vec<Option<f64>>>,
    pub metric: Metric,
    pub feature_source: String,
    pub params: serde_json::Value,
    /// True once values are z-scores.
    #[serde(default)]
    pub normalized: bool,
}

impl SimilarityMatrix {
    pub fn new(doc_ids: Vec<String>, metric: Metric, feature_source: impl Into<String>) -> Self {
        let n = doc_ids.len();
        Self {
            doc_ids,
            values: vec![vec![None; n]; n],
            metric,
            feature_source: feature_source.into(),
            params: serde_json::Value::Null,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, v: Option<f64>) {
        self.values[i][j] = v;
        self.values[j][i] = v;
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(move |&(j, _)| j != i)
                .filter_map(|(_, v)| *v)
        })
    }

    /// Same matrix with rows and columns in `order` (a permutation of ids).
    pub fn reindexed(&self, order: &[String]) -> Result<Self> {
        let idx: Vec<usize> = order
            .iter()
            .map(|id| {
                self.index_of(id)
                    .ok_or_else(|| Error::Align(format!("document `{id}` missing")))
            })
            .collect::<Result<_>>()?;
        if idx.len() != self.len() {
            return Err(Error::Align(format!(
                "{} ids for a {}-document matrix",
                idx.len(),
                self.len()
            )));
        }
        let values = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| self.values[i][j]).collect())
            .collect();
        Ok(Self {
            doc_ids: order.to_vec(),
            values,
            ..self.clone()
        })
    }

    /// Header row and column are document ids; absent cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("doc");
        for id in &self.doc_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (id, row) in self.doc_ids.iter().zip(&self.values) {
            out.push_str(id);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Parameters of the metric computed for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum MetricParams {
    Csi(CsiParams),
    Baseline(BaselineParams),
}

impl MetricParams {
    pub fn metric(&self) -> Metric {
        match self {
            MetricParams::Csi(_) => Metric::Csi,
            MetricParams::Baseline(_) => Metric::Baseline,
        }
    }

    fn seed(&self) -> u64 {
        match self {
            MetricParams::Csi(p) => p.protocol.seed,
            MetricParams::Baseline(p) => p.protocol.seed,
        }
    }

    fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            MetricParams::Csi(p) => p.protocol.seed = seed,
            MetricParams::Baseline(p) => p.protocol.seed = seed,
        }
        out
    }

    fn for_self_comparison(&self, half: usize) -> Self {
        let mut out = self.clone();
        let protocol = match &mut out {
            MetricParams::Csi(p) => &mut p.protocol,
            MetricParams::Baseline(p) => &mut p.protocol,
        };
        protocol.per_doc = protocol.per_doc.min(half);
        protocol.truncate = true;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiPairReport {
    pub doc_a: String,
    pub doc_b: String,
    pub feature_source: String,
    pub k: usize,
    pub m_steps: usize,
    pub runs: usize,
    pub per_doc: usize,
    pub seed: u64,
    pub removal: RemovalRule,
    pub pca_dim: Option<usize>,
    pub per_run_csi: Vec<f64>,
    pub mean_csi: f64,
    pub h_prior: Vec<f64>,
    /// Mean global entropy per removal step.
    pub entropy_curve: Vec<f64>,
    pub per_run_curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePairReport {
    pub doc_a: String,
    pub doc_b: String,
    pub feature_source: String,
    pub kmeans_k: usize,
    pub minority_threshold: f64,
    pub runs: usize,
    pub per_doc: usize,
    pub seed: u64,
    pub pca_dim: Option<usize>,
    pub per_run_ratio: Vec<f64>,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairReport {
    Csi(CsiPairReport),
    Baseline(BaselinePairReport),
}

impl PairReport {
    pub fn value(&self) -> f64 {
        match self {
            PairReport::Csi(r) => r.mean_csi,
            PairReport::Baseline(r) => r.mean_ratio,
        }
    }

    pub fn docs(&self) -> (&str, &str) {
        match self {
            PairReport::Csi(r) => (&r.doc_a, &r.doc_b),
            PairReport::Baseline(r) => (&r.doc_a, &r.doc_b),
        }
    }
}

/// Compares two documents with the given metric.
pub fn compare_pair(a: &FeatureSet, b: &FeatureSet, params: &MetricParams) -> Result<PairReport> {
    let source = a.feature_source.to_string();
    Ok(match params {
        MetricParams::Csi(p) => {
            let c = compare_csi(a, b, p)?;
            PairReport::Csi(CsiPairReport {
                doc_a: a.document_id.clone(),
                doc_b: b.document_id.clone(),
                feature_source: source,
                k: p.k,
                m_steps: p.m_steps,
                runs: p.protocol.runs,
                per_doc: p.protocol.per_doc,
                seed: p.protocol.seed,
                removal: p.removal,
                pca_dim: p.protocol.pca_dim,
                per_run_csi: c.per_run.iter().map(|s| s.normalized).collect(),
                mean_csi: c.mean_csi,
                h_prior: c.per_run.iter().map(|s| s.h_prior).collect(),
                entropy_curve: c.entropy_curve,
                per_run_curves: c.per_run_curves,
            })
        }
        MetricParams::Baseline(p) => {
            let c = compare_baseline(a, b, p)?;
            PairReport::Baseline(BaselinePairReport {
                doc_a: a.document_id.clone(),
                doc_b: b.document_id.clone(),
                feature_source: source,
                kmeans_k: p.kmeans_k,
                minority_threshold: p.minority_threshold,
                runs: p.protocol.runs,
                per_doc: p.protocol.per_doc,
                seed: p.protocol.seed,
                pca_dim: p.protocol.pca_dim,
                per_run_ratio: c.per_run,
                mean_ratio: c.mean_ratio,
            })
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AllPairsOptions {
    /// Directory of cached pair reports; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Fill the diagonal with split-half self-comparisons.
    pub diagonal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub doc_a: String,
    pub doc_b: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllPairsResult {
    pub matrix: SimilarityMatrix,
    pub reports: Vec<PairReport>,
    pub failures: Vec<PairFailure>,
    pub computed: usize,
    pub cache_hits: usize,
}

const CACHE_TAG: &[u8] = b"cipher-sim pair cache v1";

/// Content hash of the inputs of one pair computation.
pub fn cache_key(a: &FeatureSet, b: &FeatureSet, params: &MetricParams) -> Result<String> {
    let mut h = blake3::Hasher::new();
    h.update(CACHE_TAG);
    for fs_ in [a, b] {
        let bytes = encode_cfea(fs_)?;
        h.update(&(bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
        h.update(&(fs_.document_id.len() as u64).to_le_bytes());
        h.update(fs_.document_id.as_bytes());
        h.update(fs_.feature_source.as_str().as_bytes());
    }
    h.update(serde_json::to_string(params)?.as_bytes());
    Ok(h.finalize().to_hex().to_string())
}

fn pair_seed(base: u64, a: &str, b: &str) -> u64 {
    derive_seed(base, tag_of(&format!("{a}\u{0}{b}")))
}

enum Job<'a> {
    Pair(&'a FeatureSet, &'a FeatureSet),
    Diagonal(&'a FeatureSet),
}

fn run_job(
    job: &Job<'_>,
    params: &MetricParams,
    cache: Option<&Path>,
) -> Result<(PairReport, bool)> {
    let (a, b, params) = match *job {
        Job::Pair(x, y) => {
            // Orient by id so the result does not depend on input order.
            let (lo, hi) = if x.document_id <= y.document_id {
                (x, y)
            } else {
                (y, x)
            };
            let p = params.with_seed(pair_seed(params.seed(), &lo.document_id, &hi.document_id));
            (lo.clone(), hi.clone(), p)
        }
        Job::Diagonal(x) => {
            let seed = pair_seed(params.seed(), &x.document_id, &x.document_id);
            let (h1, h2) = x.split_halves(seed)?;
            let p = params
                .with_seed(seed)
                .for_self_comparison(h1.len().min(h2.len()));
            (h1, h2, p)
        }
    };
    let key = cache.map(|_| cache_key(&a, &b, &params)).transpose()?;
    if let (Some(dir), Some(key)) = (cache, &key) {
        let path = dir.join(format!("{key}.json"));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(report) = serde_json::from_str::<PairReport>(&text) {
                return Ok((report, true));
            }
        }
    }
    let report = compare_pair(&a, &b, &params)?;
    if let (Some(dir), Some(key)) = (cache, &key) {
        let path = dir.join(format!("{key}.json"));
        let text = serde_json::to_string_pretty(&report)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok((report, false))
}

/// Compares every unordered pair of documents once and mirrors the
/// results into a symmetric matrix. Pair failures leave their cell absent
/// and are reported; they do not abort the other pairs.
pub fn all_pairs(
    docs: &[FeatureSet],
    params: &MetricParams,
    options: &AllPairsOptions,
) -> Result<AllPairsResult> {
    if docs.len() < 2 {
        return Err(Error::Param(format!(
            "need at least 2 documents, got {}",
            docs.len()
        )));
    }
    for (i, d) in docs.iter().enumerate() {
        if docs[..i].iter().any(|o| o.document_id == d.document_id) {
            return Err(Error::Param(format!(
                "duplicate document id `{}`",
                d.document_id
            )));
        }
    }
    if let Some(dir) = &options.cache_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut jobs = Vec::new();
    for i in 0..docs.len() {
        if options.diagonal {
            jobs.push((i, i, Job::Diagonal(&docs[i])));
        }
        for j in i + 1..docs.len() {
            jobs.push((i, j, Job::Pair(&docs[i], &docs[j])));
        }
    }
    let cache = options.cache_dir.as_deref();
    let outcomes: Vec<Result<(PairReport, bool)>> = jobs
        .par_iter()
        .map(|(_, _, job)| run_job(job, params, cache))
        .collect();

    let ids: Vec<String> = docs.iter().map(|d| d.document_id.clone()).collect();
    let mut matrix =
        SimilarityMatrix::new(ids, params.metric(), docs[0].feature_source.to_string());
    matrix.params = serde_json::to_value(params)?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let (mut computed, mut cache_hits) = (0, 0);
    for ((i, j, _), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok((report, hit)) => {
                if hit {
                    cache_hits += 1;
                } else {
                    computed += 1;
                }
                matrix.set_pair(*i, *j, Some(report.value()));
                reports.push(report);
            }
            Err(e) => failures.push(PairFailure {
                doc_a: docs[*i].document_id.clone(),
                doc_b: docs[*j].document_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(AllPairsResult {
        matrix,
        reports,
        failures,
        computed,
        cache_hits,
    })
}

/// Replaces values by `(v - mean) / std` over the off-diagonal cells
/// (population standard deviation). The diagonal, when present, is mapped
/// with the same constants.
pub fn znormalize(m: &SimilarityMatrix) -> Result<SimilarityMatrix> {
    let vals: Vec<f64> = m.off_diagonal().collect();
    if vals.len() < 2 {
        return Err(Error::Degenerate("fewer than 2 off-diagonal values".into()));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if !(std > 0.0) {
        return Err(Error::Degenerate(
            "all off-diagonal values are equal".into(),
        ));
    }
    let mut out = m.clone();
    for row in &mut out.values {
        for v in row.iter_mut().flatten() {
            *v = (*v - mean) / std;
        }
    }
    out.normalized = true;
    out.params = serde_json::json!({
        "source_params": m.params,
        "znorm": { "mean": mean, "std": std },
    });
    Ok(out)
}

/// Cellwise geometric mean across feature sources.
///
/// Z-normalized inputs are first shifted so their smallest off-diagonal
/// value becomes 0; the shifts are recorded in `params`. Raw inputs must
/// already be non-negative.
pub fn agreement(matrices: &[SimilarityMatrix]) -> Result<SimilarityMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Param("agreement needs at least one matrix".into()))?;
    let order = &first.doc_ids;
    let mut aligned = Vec::with_capacity(matrices.len());
    let mut shifts = Vec::with_capacity(matrices.len());
    for m in matrices {
        let mut sorted_a = m.doc_ids.clone();
        let mut sorted_b = order.clone();
        sorted_a.sort();
        sorted_b.sort();
        if sorted_a != sorted_b {
            return Err(Error::Align(format!(
                "`{}` covers different documents than `{}`",
                m.feature_source, first.feature_source
            )));
        }
        let mut r = m.reindexed(order)?;
        let shift = if r.normalized {
            r.off_diagonal().fold(f64::INFINITY, f64::min)
        } else {
            0.0
        };
        let shift = if shift.is_finite() { shift } else { 0.0 };
        for row in &mut r.values {
            for v in row.iter_mut().flatten() {
                *v = (*v - shift).max(0.0);
            }
        }
        if !r.normalized {
            if let Some(bad) = m.values.iter().flatten().flatten().find(|v| **v < 0.0) {
                return Err(Error::Data(format!(
                    "negative value {bad} in raw matrix `{}`",
                    m.feature_source
                )));
            }
        }
        shifts.push(shift);
        aligned.push(r);
    }
    let n = order.len();
    let q = aligned.len() as f64;
    let mut out = SimilarityMatrix::new(order.clone(), first.metric, "agreement");
    for i in 0..n {
        for j in 0..n {
            let mut cell: Option<Vec<f64>> = Some(Vec::with_capacity(aligned.len()));
            for m in &aligned {
                match (m.values[i][j], cell.as_mut()) {
                    (Some(v), Some(c)) => c.push(v),
                    _ => cell = None,
                }
            }
            out.values[i][j] = cell.map(|mut vs| {
                // Sorting makes the product independent of source order.
                vs.sort_by(f64::total_cmp);
                vs.iter().product::<f64>().powf(1.0 / q)
            });
        }
    }
    out.params = serde_json::json!({
        "sources": matrices.iter().map(|m| m.feature_source.clone()).collect::<Vec<_>>(),
        "normalized_inputs": matrices.iter().map(|m| m.normalized).collect::<Vec<_>>(),
        "shifts": shifts,
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestPair {
    pub doc: String,
    pub partner: String,
    pub value: f64,
}

/// Most similar other document for each document, ranked by score.
pub fn nearest_pairs(m: &SimilarityMatrix) -> Vec<NearestPair> {
    let mut out = Vec::new();
    for (i, id) in m.doc_ids.iter().enumerate() {
        let mut best: Option<(f64, &String)> = None;
        for (j, other) in m.doc_ids.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(v) = m.values[i][j] {
                let better = match best {
                    None => true,
                    Some((bv, bid)) => v > bv || (v == bv && other < bid),
                };
                if better {
                    best = Some((v, other));
                }
            }
        }
        if let Some((value, partner)) = best {
            out.push(NearestPair {
                doc: id.clone(),
                partner: partner.clone(),
                value,
            });
        }
    }
    out.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.doc.cmp(&b.doc)));
    out
}

/// Corpus manifest: documents and their feature files per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub documents: Vec<CorpusEntry>,
    /// Directory relative feature paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    #[serde(flatten)]
    pub document: Document,
    /// Feature source name to feature file path.
    pub features: BTreeMap<String, PathBuf>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CorpusManifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.documents.iter().enumerate() {
            if e.document.id.trim().is_empty() {
                return Err(Error::Data("document with empty id".into()));
            }
            if self.documents[..i]
                .iter()
                .any(|o| o.document.id == e.document.id)
            {
                return Err(Error::Data(format!(
                    "duplicate document id `{}`",
                    e.document.id
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// All sources named by any document, sorted.
    pub fn sources(&self) -> Vec<String> {
        let mut s: Vec<String> = self
            .documents
            .iter()
            .flat_map(|e| e.features.keys().cloned())
            .collect();
        s.sort();
        s.dedup();
        s
    }

    /// Loads one source's features for the listed ids (all when `ids` is None),
    /// relabelled with manifest ids.
    pub fn load_source(&self, source: &str, ids: Option<&[String]>) -> Result<Vec<FeatureSet>> {
        let entries: Vec<&CorpusEntry> = match ids {
            None => self.documents.iter().collect(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    self.documents
                        .iter()
                        .find(|e| &e.document.id == id)
                        .ok_or_else(|| Error::Param(format!("unknown document `{id}`")))
                })
                .collect::<Result<_>>()?,
        };
        entries
            .into_iter()
            .map(|e| {
                let rel = e.features.get(source).ok_or_else(|| {
                    Error::Data(format!("`{}` has no `{source}` features", e.document.id))
                })?;
                let mut fs_ = load_feature_file(self.base_dir.join(rel))?;
                fs_.document_id = e.document.id.clone();
                Ok(fs_)
            })
            .collect()
    }
}
