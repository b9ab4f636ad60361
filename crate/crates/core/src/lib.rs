//! Cipher-alphabet similarity from symbol images.
//!
//! Pages are binarized and segmented into symbol crops, crops become
//! feature vectors, and pairs of documents are scored by how strongly their
//! symbols intermix in a mutual nearest-neighbour graph as it is split by
//! Girvan-Newman edge removal. A k-means mixing baseline and a
//! classifier-based second-choice affinity are provided for comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affinity;
pub mod baseline;
pub mod corpus;
pub mod descriptor;
pub mod error;
pub mod graphsim;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod segment;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
