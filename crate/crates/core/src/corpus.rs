//! Documents, feature sets and the `CFEA` feature file format.
//!
//! A `CFEA` file is a 16-byte header followed by a row-major payload of
//! little-endian `f32` values:
//!
//! | bytes  | content                     |
//! |--------|-----------------------------|
//! | 0..4   | magic `CFEA`                |
//! | 4..8   | format version, `u32` = 1   |
//! | 8..12  | row count `N`, `u32`        |
//! | 12..16 | dimension `dim`, `u32`      |
//! | 16..   | `N * dim` `f32` values      |
//!
//! Next to every feature file lives a JSON manifest with the same stem
//! recording the document id, the feature source and a creation time.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const CFEA_MAGIC: &[u8; 4] = b"CFEA";
pub const CFEA_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// One source manuscript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<PathBuf>,
}

impl Document {
    pub fn new(id: impl Into<String>, display_name: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::Input("document id must be non-empty".into()));
        }
        Ok(Self {
            id,
            display_name: display_name.into(),
            source_path: None,
        })
    }
}

/// Where a feature matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    GridSift,
    Vgg16,
    Clip,
    OcrGeneric,
    OcrHandwritten,
    External,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 6] = [
        FeatureSource::GridSift,
        FeatureSource::Vgg16,
        FeatureSource::Clip,
        FeatureSource::OcrGeneric,
        FeatureSource::OcrHandwritten,
        FeatureSource::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSource::GridSift => "grid_sift",
            FeatureSource::Vgg16 => "vgg16",
            FeatureSource::Clip => "clip",
            FeatureSource::OcrGeneric => "ocr_generic",
            FeatureSource::OcrHandwritten => "ocr_handwritten",
            FeatureSource::External => "external",
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        FeatureSource::ALL
            .into_iter()
            .find(|src| src.as_str() == norm)
            .ok_or_else(|| Error::Param(format!("unknown feature source `{s}`")))
    }
}

/// Row-major matrix of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("matrix dimension must be positive".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Input(format!(
                "matrix payload has {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Input(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn select(&self, indices: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RowMatrix {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }
}

/// Per-symbol feature vectors of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub document_id: String,
    pub feature_source: FeatureSource,
    vectors: RowMatrix,
}

impl FeatureSet {
    pub fn new(
        document_id: impl Into<String>,
        feature_source: FeatureSource,
        vectors: RowMatrix,
    ) -> Result<Self> {
        let document_id = document_id.into();
        if document_id.trim().is_empty() {
            return Err(Error::Input("feature set needs a document id".into()));
        }
        if vectors.rows() == 0 {
            return Err(Error::Data(format!(
                "feature set for `{document_id}` has no rows"
            )));
        }
        if let Some(pos) = vectors.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / vectors.dim(),
                pos % vectors.dim()
            )));
        }
        Ok(Self {
            document_id,
            feature_source,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn vectors(&self) -> &RowMatrix {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    /// Randomly splits the rows into two disjoint halves, used for
    /// self-comparison of one document.
    pub fn split_halves(&self, seed: u64) -> Result<(FeatureSet, FeatureSet)> {
        if self.len() < 2 {
            return Err(Error::Size(format!(
                "`{}` needs at least 2 rows to split",
                self.document_id
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut order = index::sample(&mut rng, self.len(), self.len()).into_vec();
        let second = order.split_off(self.len() / 2);
        let mut first = order;
        first.sort_unstable();
        let mut second = second;
        second.sort_unstable();
        let a = FeatureSet {
            document_id: format!("{}#1", self.document_id),
            feature_source: self.feature_source,
            vectors: self.vectors.select(&first),
        };
        let b = FeatureSet {
            document_id: format!("{}#2", self.document_id),
            feature_source: self.feature_source,
            vectors: self.vectors.select(&second),
        };
        Ok((a, b))
    }
}

/// Sidecar manifest stored next to a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub document_id: String,
    pub feature_source: String,
    pub created: String,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Encodes a feature set as `CFEA` bytes.
pub fn encode_cfea(fs: &FeatureSet) -> Result<Vec<u8>> {
    let rows = u32::try_from(fs.len()).map_err(|_| Error::Size("too many rows".into()))?;
    let dim = u32::try_from(fs.dim()).map_err(|_| Error::Size("dimension too large".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + fs.len() * fs.dim() * 4);
    out.extend_from_slice(CFEA_MAGIC);
    out.extend_from_slice(&CFEA_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for &v in fs.vectors.as_slice() {
        let single = v as f32;
        if !single.is_finite() {
            return Err(Error::Data(format!("value {v} does not fit in f32")));
        }
        out.extend_from_slice(&single.to_le_bytes());
    }
    Ok(out)
}

/// Decodes `CFEA` bytes; `document_id` and `source` label the result.
pub fn decode_cfea(bytes: &[u8], document_id: &str, source: FeatureSource) -> Result<FeatureSet> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != CFEA_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        return Err(Error::Truncation(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != CFEA_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != CFEA_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = word(8) as usize;
    let dim = word(12) as usize;
    if dim == 0 {
        return Err(Error::Data("dimension is zero".into()));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Truncation(format!(
            "header declares {rows}x{dim} values ({expected} bytes), payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureSet::new(document_id, source, RowMatrix::new(rows, dim, data)?)
}

/// Reads a `CFEA` feature file and, when present, its sidecar manifest.
pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (doc, source) = match read_manifest(path)? {
        Some(m) => (m.document_id, m.feature_source.parse()?),
        None => (
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "document".into()),
            FeatureSource::External,
        ),
    };
    decode_cfea(&bytes, &doc, source)
}

pub fn read_manifest(path: &Path) -> Result<Option<FeatureManifest>> {
    let mpath = manifest_path(path);
    if !mpath.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Writes the feature file and its sidecar manifest.
pub fn save_feature_file(fs_: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cfea(fs_)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let manifest = FeatureManifest {
        document_id: fs_.document_id.clone(),
        feature_source: fs_.feature_source.to_string(),
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

/// Balanced pool of two documents' vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSample {
    pub vectors: RowMatrix,
    /// Per-row index into `doc_ids`.
    pub labels: Vec<usize>,
    pub doc_ids: Vec<String>,
    /// Rows drawn from each document, aligned with `doc_ids`.
    pub prior: Vec<usize>,
}

impl PooledSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn with_vectors(&self, vectors: RowMatrix) -> Result<Self> {
        if vectors.rows() != self.len() {
            return Err(Error::Size(format!(
                "replacement has {} rows, pool has {}",
                vectors.rows(),
                self.len()
            )));
        }
        Ok(Self {
            vectors,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolOptions {
    pub per_doc: usize,
    /// Allow a document smaller than `per_doc` to contribute all its rows.
    pub truncate: bool,
}

/// Draws `per_doc` rows from each document uniformly without replacement.
pub fn sample_pool(
    a: &FeatureSet,
    b: &FeatureSet,
    options: PoolOptions,
    seed: u64,
) -> Result<PooledSample> {
    if a.dim() != b.dim() {
        return Err(Error::Dim {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if options.per_doc == 0 {
        return Err(Error::Param("per_doc must be positive".into()));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut prior = Vec::with_capacity(2);
    for (label, fs_) in [a, b].into_iter().enumerate() {
        let take = if options.per_doc > fs_.len() {
            if !options.truncate {
                return Err(Error::Size(format!(
                    "`{}` has {} rows, {} requested",
                    fs_.document_id,
                    fs_.len(),
                    options.per_doc
                )));
            }
            fs_.len()
        } else {
            options.per_doc
        };
        let mut rng = rng::seeded(rng::derive_seed(seed, label as u64));
        let mut picked = index::sample(&mut rng, fs_.len(), take).into_vec();
        picked.sort_unstable();
        for i in picked {
            data.extend_from_slice(fs_.row(i));
            labels.push(label);
        }
        prior.push(take);
    }
    Ok(PooledSample {
        vectors: RowMatrix::new(labels.len(), a.dim(), data)?,
        labels,
        doc_ids: vec![a.document_id.clone(), b.document_id.clone()],
        prior,
    })
}
