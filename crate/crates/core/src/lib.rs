//! Retrieval-time hubness reduction for embedding search.
//!
//! Candidates that are nearest neighbors of many queries get a per-candidate
//! bias estimated from a reference query set, which is subtracted from every
//! inner product at query time. Baseline normalizations (DN, QBNorm, DualIS,
//! DualDIS), hubness diagnostics and recall evaluation live alongside.

pub mod bench;
pub mod cli;
pub mod diagnostics;
pub mod embed_io;
pub mod error;
pub mod evaluation;
pub mod normalization;
pub mod ranking;
pub mod synthetic;
pub mod vector_index;

pub use embed_io::{EmbeddingMatrix, GroundTruth};
pub use error::{Error, Result};
pub use normalization::{apply, compute_bias, ApplyOptions, BiasVector, NormalizationSpec, References};
pub use ranking::{RankingTable, SearchHit};
pub use vector_index::{IndexConfig, IvfParams, VectorIndex};
