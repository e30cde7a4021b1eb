//! End-to-end analysis: co-occurrence, embedding, projection, clustering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{agglomerate, cut, select_k, ClusterError, ClusterTree, KSelection, Linkage};
use crate::cooccur::{assemble, factorize, relation_rows, AssemblyConfig, CooccurrenceResult, EmbedError, EmbeddingSet, LabeledPoints};
use crate::dataset::Dataset;
use crate::manifold::{project, ManifoldError, Projection, UmapConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("embed: {0}")]
    Embed(#[from] EmbedError),
    #[error("manifold: {0}")]
    Manifold(#[from] ManifoldError),
    #[error("cluster: {0}")]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub assembly: AssemblyConfig,
    pub umap: UmapConfig,
    pub linkage: Linkage,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub cooccurrence: CooccurrenceResult,
    pub embeddings: EmbeddingSet,
    pub projection: Projection,
    pub tree: ClusterTree,
    pub selection: KSelection,
    /// Cluster of each relation label at `selection.k_best`.
    pub assignment: Vec<usize>,
}

pub fn analyze(ds: &Dataset, cfg: &AnalysisConfig) -> Result<Analysis, PipelineError> {
    let cooccurrence = assemble(ds, cfg.assembly);
    let embeddings = factorize(&cooccurrence, cfg.assembly.pca_dims)?;
    let projection = project(&relation_rows(&embeddings), &cfg.umap)?;
    let coords = LabeledPoints {
        names: projection.names.clone(),
        points: projection.coords.clone(),
    };
    let tree = agglomerate(&coords, cfg.linkage)?;
    let selection = select_k(&coords.points, &tree)?;
    let assignment = cut(&tree, selection.k_best)?;
    Ok(Analysis {
        cooccurrence,
        embeddings,
        projection,
        tree,
        selection,
        assignment,
    })
}
