//! Sampling protocol shared by the similarity index and the k-means baseline:
//! a balanced random subset per document, repeated over several runs, with
//! PCA fit on each pooled sample.

use serde::{Deserialize, Serialize};

use crate::corpus::{sample_pool, FeatureSet, PoolOptions, PooledSample};
use crate::descriptor::{pca_fit, pca_transform};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const DEFAULT_PER_DOC: usize = 500;
pub const DEFAULT_RUNS: usize = 4;
pub const DEFAULT_PCA_DIM: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingProtocol {
    pub per_doc: usize,
    pub runs: usize,
    pub seed: u64,
    /// Reduce pooled features to this many dimensions; `None` keeps them.
    /// Inputs already at or below the target are left untouched.
    pub pca_dim: Option<usize>,
    /// Draw a fresh subset every run; otherwise every run reuses run 0's pool.
    pub resample: bool,
    /// Let documents smaller than `per_doc` contribute all their rows.
    pub truncate: bool,
}

impl Default for SamplingProtocol {
    fn default() -> Self {
        Self {
            per_doc: DEFAULT_PER_DOC,
            runs: DEFAULT_RUNS,
            seed: 0,
            pca_dim: Some(DEFAULT_PCA_DIM),
            resample: true,
            truncate: false,
        }
    }
}

impl SamplingProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Param("runs must be >= 1".into()));
        }
        if self.per_doc == 0 {
            return Err(Error::Param("per_doc must be >= 1".into()));
        }
        if self.pca_dim == Some(0) {
            return Err(Error::Param("pca dimension must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pool_seed(&self, run: usize) -> u64 {
        let stream = if self.resample { run as u64 } else { 0 };
        derive_seed(self.seed, stream)
    }
}

/// Pool for one run, PCA-reduced when the protocol asks for it.
pub fn prepare_pool(
    a: &FeatureSet,
    b: &FeatureSet,
    protocol: &SamplingProtocol,
    run: usize,
) -> Result<PooledSample> {
    let options = PoolOptions {
        per_doc: protocol.per_doc,
        truncate: protocol.truncate,
    };
    let pool = sample_pool(a, b, options, protocol.pool_seed(run))?;
    match protocol.pca_dim {
        Some(target) if pool.vectors.dim() > target => {
            let out_dim = target.min(pool.len() - 1);
            let model = pca_fit(&pool.vectors, out_dim)?;
            let reduced = pca_transform(&model, &pool.vectors)?;
            pool.with_vectors(reduced)
        }
        _ => Ok(pool),
    }
}
