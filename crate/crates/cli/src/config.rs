//! Resolved run configuration: defaults, then the `--config` file, then flags.

use std::path::Path;

use discoconf::cluster::Linkage;
use discoconf::manifold::{Init, UmapConfig};
use discoconf::ordinal::FitMethod;
use discoconf::{AssemblyConfig, Format};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapKnobs {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub init: Init,
}

impl Default for UmapKnobs {
    fn default() -> Self {
        let d = UmapConfig::default();
        Self {
            n_neighbors: d.n_neighbors,
            min_dist: d.min_dist,
            spread: d.spread,
            epochs: d.epochs,
            negative_samples: d.negative_samples,
            init: d.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimKnobs {
    pub n_du_pairs: Option<usize>,
    pub n_annotators: Option<usize>,
    pub format: Format,
}

impl Default for SimKnobs {
    fn default() -> Self {
        Self {
            n_du_pairs: None,
            n_annotators: None,
            format: Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<String>,
    pub out_dir: String,
    pub weighted: bool,
    pub include_context: bool,
    pub pca_dims: usize,
    pub umap: UmapKnobs,
    pub linkage: Linkage,
    pub seed: Option<u64>,
    pub formula: String,
    pub null_formula: Option<String>,
    pub method: FitMethod,
    pub correlated: bool,
    pub simulate: SimKnobs,
}

pub const DEFAULT_FORMULA: &str = "confidence ~ kind + (1 | annotator) + (1 | du_pair)";

impl Default for PipelineConfig {
    fn default() -> Self {
        let a = AssemblyConfig::default();
        Self {
            input: None,
            out_dir: "out".into(),
            weighted: a.weight_by_confidence,
            include_context: a.include_context,
            pca_dims: a.pca_dims,
            umap: UmapKnobs::default(),
            linkage: Linkage::default(),
            seed: None,
            formula: DEFAULT_FORMULA.into(),
            null_formula: None,
            method: FitMethod::Laplace,
            correlated: false,
            simulate: SimKnobs::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn assembly(&self) -> AssemblyConfig {
        AssemblyConfig {
            weight_by_confidence: self.weighted,
            include_context: self.include_context,
            pca_dims: self.pca_dims,
        }
    }

    pub fn umap_config(&self) -> UmapConfig {
        let k = self.umap;
        UmapConfig {
            n_neighbors: k.n_neighbors,
            min_dist: k.min_dist,
            spread: k.spread,
            epochs: k.epochs,
            seed: self.seed.unwrap_or(0),
            negative_samples: k.negative_samples,
            init: k.init,
        }
    }

    pub fn variant(&self) -> &'static str {
        self.assembly().variant()
    }
}
