//! Distributed representations and confidence models for multi-label,
//! confidence-scored discourse-relation annotations.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`dataset`] and [`stats`]: corpus ingestion, validation, descriptive tables.
//! * [`cooccur`]: confidence/context-weighted annotation matrix, feature
//!   co-occurrence and uncentered PCA.
//! * [`manifold`]: deterministic UMAP-style projection to two dimensions.
//! * [`cluster`]: agglomerative clustering with silhouette-based choice of k.
//! * [`ordinal`]: cumulative-link models (with random effects) of confidence
//!   and likelihood-ratio tests.
//! * [`simulate`]: generator of synthetic corpora with known ground truth.
//! * [`pipeline`]: the embedding, projection and clustering stages chained.

pub mod cluster;
pub mod cooccur;
pub mod dataset;
pub mod labels;
pub mod linalg;
pub mod manifold;
pub mod ordinal;
pub mod pipeline;
pub mod simulate;
pub mod stats;
pub mod svg;

pub use cooccur::{assemble, factorize, relation_rows, AssemblyConfig, CooccurrenceResult, EmbeddingSet, LabeledPoints};
pub use dataset::{parse_dataset, AnnotationRecord, DataError, Dataset, Format};
pub use labels::{ContextKind, RelationLabel};
