//! Annotation matrix assembly, feature co-occurrence, and uncentered PCA.
//!
//! Each record contributes a row `a_i = c_i * (r_i | d_i)`: the 0/1 relation
//! bag, optionally followed by the one-hot context, optionally scaled by the
//! confidence score. The co-occurrence matrix is the feature Gram matrix
//! `O = A^T A`, accumulated in integers so it is exact and independent of
//! record order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::labels::{ContextKind, RelationLabel};
use crate::linalg::symmetric_eigen;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("requested {requested} dimensions but only {available} features exist")]
    TooManyDims { requested: usize, available: usize },
    #[error("embedding dimension must be at least 1")]
    ZeroDims,
    #[error("co-occurrence matrix contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub weight_by_confidence: bool,
    pub include_context: bool,
    pub pca_dims: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            weight_by_confidence: true,
            include_context: true,
            pca_dims: 10,
        }
    }
}

impl AssemblyConfig {
    pub fn feature_count(&self) -> usize {
        if self.include_context {
            RelationLabel::COUNT + ContextKind::COUNT
        } else {
            RelationLabel::COUNT
        }
    }

    /// Short tag naming the variant: `weighted-context`, `weighted`,
    /// `context` or `unweighted`.
    pub fn variant(&self) -> &'static str {
        match (self.weight_by_confidence, self.include_context) {
            (true, true) => "weighted-context",
            (true, false) => "weighted",
            (false, true) => "context",
            (false, false) => "unweighted",
        }
    }
}

pub fn feature_names(include_context: bool) -> Vec<String> {
    let mut names: Vec<String> = RelationLabel::ALL.iter().map(|l| l.token().to_string()).collect();
    if include_context {
        names.extend(ContextKind::ALL.iter().map(|c| c.token().to_string()));
    }
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceResult {
    /// n x m annotation matrix.
    pub a: DMatrix<f64>,
    /// m x m co-occurrence matrix.
    pub o: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub config: AssemblyConfig,
}

/// Integer feature row for one record.
fn annotation_row(
    labels_bag: [u8; RelationLabel::COUNT],
    context: ContextKind,
    confidence: u8,
    cfg: &AssemblyConfig,
) -> Vec<i64> {
    let w = if cfg.weight_by_confidence {
        confidence as i64
    } else {
        1
    };
    let mut row: Vec<i64> = labels_bag.iter().map(|&b| b as i64 * w).collect();
    if cfg.include_context {
        let mut ctx = [0i64; ContextKind::COUNT];
        ctx[context.index()] = w;
        row.extend_from_slice(&ctx);
    }
    row
}

pub fn assemble(ds: &Dataset, cfg: AssemblyConfig) -> CooccurrenceResult {
    let m = cfg.feature_count();
    let n = ds.len();
    let mut a = DMatrix::zeros(n, m);
    let mut o = vec![0i64; m * m];
    for (i, r) in ds.records().iter().enumerate() {
        let row = annotation_row(r.label_bag(), r.context, r.confidence, &cfg);
        for (j, &x) in row.iter().enumerate() {
            a[(i, j)] = x as f64;
        }
        let nz: Vec<(usize, i64)> = row.iter().copied().enumerate().filter(|&(_, x)| x != 0).collect();
        for &(p, xp) in &nz {
            for &(q, xq) in &nz {
                o[p * m + q] += xp * xq;
            }
        }
    }
    CooccurrenceResult {
        a,
        o: DMatrix::from_fn(m, m, |p, q| o[p * m + q] as f64),
        feature_names: feature_names(cfg.include_context),
        config: cfg,
    }
}

impl CooccurrenceResult {
    pub fn to_csv(&self) -> String {
        matrix_csv(&self.feature_names, &self.feature_names, &self.o)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            variant: &'a str,
            config: &'a AssemblyConfig,
            n_records: usize,
            feature_names: &'a [String],
            cooccurrence: Vec<Vec<f64>>,
        }
        serde_json::to_string_pretty(&Out {
            variant: self.config.variant(),
            config: &self.config,
            n_records: self.a.nrows(),
            feature_names: &self.feature_names,
            cooccurrence: rows_of(&self.o),
        })
        .expect("serializable")
    }
}

/// Per-feature vectors from the top eigenpairs of `O`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    /// m x d, one row per feature.
    pub vectors: DMatrix<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    pub feature_names: Vec<String>,
}

/// Uncentered PCA of the co-occurrence matrix: `vectors = U_d * sqrt(Λ_d)`.
///
/// Each eigenvector is oriented so its largest-magnitude entry (first one on
/// ties) is non-negative. Round-off negative eigenvalues are clamped to 0.
pub fn factorize(co: &CooccurrenceResult, d: usize) -> Result<EmbeddingSet, EmbedError> {
    let m = co.o.nrows();
    if d == 0 {
        return Err(EmbedError::ZeroDims);
    }
    if d > m {
        return Err(EmbedError::TooManyDims {
            requested: d,
            available: m,
        });
    }
    if co.o.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    let eig = symmetric_eigen(&co.o);
    let mut vectors = DMatrix::zeros(m, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for k in 0..d {
        let lambda = eig.values[k].max(0.0);
        let col = eig.vectors.column(k);
        let mut pivot = 0;
        for i in 1..m {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..m {
            vectors[(i, k)] = col[i] * scale;
        }
        eigenvalues.push(lambda);
    }
    Ok(EmbeddingSet {
        vectors,
        eigenvalues,
        feature_names: co.feature_names.clone(),
    })
}

/// Named points in a real coordinate space.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub names: Vec<String>,
    pub points: DMatrix<f64>,
}

/// The relation-label rows of an embedding, in canonical label order.
pub fn relation_rows(e: &EmbeddingSet) -> LabeledPoints {
    let m = RelationLabel::COUNT.min(e.vectors.nrows());
    LabeledPoints {
        names: e.feature_names[..m].to_vec(),
        points: e.vectors.rows(0, m).into_owned(),
    }
}

impl EmbeddingSet {
    pub fn dims(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn to_csv(&self) -> String {
        let cols: Vec<String> = (1..=self.dims()).map(|k| format!("dim{k}")).collect();
        matrix_csv(&self.feature_names, &cols, &self.vectors)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            feature_names: &'a [String],
            eigenvalues: &'a [f64],
            vectors: Vec<Vec<f64>>,
        }
        serde_json::to_string_pretty(&Out {
            feature_names: &self.feature_names,
            eigenvalues: &self.eigenvalues,
            vectors: rows_of(&self.vectors),
        })
        .expect("serializable")
    }
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_csv(row_names: &[String], col_names: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::from("feature");
    for c in col_names {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, name) in row_names.iter().enumerate() {
        out.push_str(name);
        for j in 0..m.ncols() {
            out.push_str(&format!(",{}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}
