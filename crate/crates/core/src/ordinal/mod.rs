//! Cumulative-link (proportional-odds, logit) models of ordinal responses,
//! with optional Gaussian random effects, and likelihood-ratio tests between
//! nested fits.
//!
//! The model is `P(Y <= j | x, u) = F(θ_j - x·β - z·u)` with logistic `F`.
//! Thresholds are optimized through `θ_1, log(θ_2 - θ_1), ...` so they stay
//! strictly increasing. Random effects are written `u = Λ b` with
//! `b ~ N(0, I)` and `Λ` lower triangular (diagonal unless a term is marked
//! correlated); the diagonal of `Λ` is optimized on the log scale.

mod clm;
mod clmm;
mod formula;
mod lrt;
mod optim;
pub mod quadrature;
pub mod special;

use std::fmt::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::labels::ContextKind;

pub use clm::{clm_fit, clm_gradient, clm_loglik};
pub use clmm::{clmm_fit, clmm_fit_with, marginal_loglik, ClmmOptions};
pub use formula::{parse_formula, Formula, RandomSpec};
pub use lrt::{lrt, LrtResult};
pub use special::chisq_sf;

#[derive(Debug, Error, PartialEq)]
pub enum OrdinalError {
    #[error("design matrix (with thresholds) is rank deficient")]
    RankDeficient,
    #[error("response {value} at row {row} outside 1..={levels}")]
    ResponseOutOfRange { row: usize, value: usize, levels: usize },
    #[error("need at least 2 response levels, got {0}")]
    TooFewLevels(usize),
    #[error("unknown column or factor {0:?}")]
    UnknownColumn(String),
    #[error("unknown grouping factor {0:?}")]
    UnknownGroup(String),
    #[error("ill-posed model: {0}")]
    IllPosed(String),
    #[error("formula parse error: {0}")]
    Formula(String),
    #[error("inner mode search did not converge")]
    InnerNonConvergence,
    #[error("fits are not nested: {0}")]
    NotNested(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("column {name:?} has {got} values, expected {expected}")]
    LengthMismatch { name: String, expected: usize, got: usize },
}

/// A grouping factor: one level index per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub name: String,
    pub levels: Vec<String>,
    pub index: Vec<usize>,
}

/// Observations for ordinal models: response levels `1..=levels`, named
/// numeric columns, dummy-coded factors, and grouping factors.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalData {
    pub response_name: String,
    pub levels: usize,
    pub response: Vec<usize>,
    columns: Vec<(String, Vec<f64>)>,
    factors: Vec<(String, Vec<String>)>,
    groups: Vec<Grouping>,
}

impl OrdinalData {
    pub fn new(response_name: &str, levels: usize, response: Vec<usize>) -> Result<Self, OrdinalError> {
        if levels < 2 {
            return Err(OrdinalError::TooFewLevels(levels));
        }
        if let Some((row, &value)) = response.iter().enumerate().find(|(_, &v)| v < 1 || v > levels) {
            return Err(OrdinalError::ResponseOutOfRange { row, value, levels });
        }
        Ok(Self {
            response_name: response_name.to_string(),
            levels,
            response,
            columns: Vec::new(),
            factors: Vec::new(),
            groups: Vec::new(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    fn check_len(&self, name: &str, got: usize) -> Result<(), OrdinalError> {
        if got != self.n_obs() {
            return Err(OrdinalError::LengthMismatch {
                name: name.to_string(),
                expected: self.n_obs(),
                got,
            });
        }
        Ok(())
    }

    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Self, OrdinalError> {
        self.check_len(name, values.len())?;
        self.columns.retain(|(n, _)| n != name);
        self.columns.push((name.to_string(), values));
        Ok(self)
    }

    /// Dummy-codes a nominal factor against `reference`; columns are named
    /// `factor:level` in order of `levels`.
    pub fn with_factor(
        mut self,
        name: &str,
        values: &[&str],
        levels: &[&str],
        reference: &str,
    ) -> Result<Self, OrdinalError> {
        self.check_len(name, values.len())?;
        if !levels.contains(&reference) {
            return Err(OrdinalError::UnknownColumn(format!("{name}:{reference}")));
        }
        if let Some(bad) = values.iter().find(|v| !levels.contains(v)) {
            return Err(OrdinalError::UnknownColumn(format!("{name}:{bad}")));
        }
        let mut cols = Vec::new();
        for &lvl in levels.iter().filter(|&&l| l != reference) {
            let col = format!("{name}:{lvl}");
            let v = values.iter().map(|&x| if x == lvl { 1.0 } else { 0.0 }).collect();
            self = self.with_column(&col, v)?;
            cols.push(col);
        }
        self.factors.retain(|(n, _)| n != name);
        self.factors.push((name.to_string(), cols));
        Ok(self)
    }

    pub fn with_group(mut self, name: &str, labels: &[String]) -> Result<Self, OrdinalError> {
        self.check_len(name, labels.len())?;
        let mut levels: Vec<String> = Vec::new();
        let mut lookup = std::collections::HashMap::new();
        let index = labels
            .iter()
            .map(|l| {
                *lookup.entry(l.clone()).or_insert_with(|| {
                    levels.push(l.clone());
                    levels.len() - 1
                })
            })
            .collect();
        self.groups.retain(|g| g.name != name);
        self.groups.push(Grouping {
            name: name.to_string(),
            levels,
            index,
        });
        Ok(self)
    }

    /// Model data for a corpus: response `confidence` (5 levels), factor
    /// `kind` dummy-coded against `single_turn`, and grouping factors
    /// `annotator`, `du_pair`, `conversation`, `team`.
    pub fn from_dataset(ds: &Dataset) -> Self {
        let recs = ds.records();
        let response = recs.iter().map(|r| r.confidence as usize).collect();
        let kinds: Vec<&str> = recs.iter().map(|r| r.context.token()).collect();
        let levels: Vec<&str> = ContextKind::ALL.iter().map(|c| c.token()).collect();
        let group = |f: fn(&crate::dataset::AnnotationRecord) -> &String| -> Vec<String> {
            recs.iter().map(|r| f(r).clone()).collect()
        };
        OrdinalData::new("confidence", 5, response)
            .and_then(|d| d.with_factor("kind", &kinds, &levels, ContextKind::SingleTurn.token()))
            .and_then(|d| d.with_group("annotator", &group(|r| &r.annotator_id)))
            .and_then(|d| d.with_group("du_pair", &group(|r| &r.du_pair_id)))
            .and_then(|d| d.with_group("conversation", &group(|r| &r.conversation_id)))
            .and_then(|d| d.with_group("team", &group(|r| &r.team_id)))
            .expect("validated dataset always yields valid model data")
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Dummy columns of a factor, or the column itself.
    pub fn expand(&self, name: &str) -> Result<Vec<String>, OrdinalError> {
        if let Some((_, cols)) = self.factors.iter().find(|(n, _)| n == name) {
            return Ok(cols.clone());
        }
        if self.column(name).is_some() {
            return Ok(vec![name.to_string()]);
        }
        Err(OrdinalError::UnknownColumn(name.to_string()))
    }

    pub fn group(&self, name: &str) -> Option<&Grouping> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub(crate) fn design(&self, names: &[String]) -> Result<DMatrix<f64>, OrdinalError> {
        let cols: Vec<&[f64]> = names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| OrdinalError::UnknownColumn(n.clone())))
            .collect::<Result<_, _>>()?;
        Ok(DMatrix::from_fn(self.n_obs(), names.len(), |i, j| cols[j][i]))
    }

    pub fn level_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.levels];
        for &y in &self.response {
            c[y - 1] += 1;
        }
        c
    }
}

/// Random-effect term: `(1 + slopes | group)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomTerm {
    pub group: String,
    pub intercept: bool,
    pub slopes: Vec<String>,
    pub correlated: bool,
}

impl RandomTerm {
    pub fn intercept(group: &str) -> Self {
        Self {
            group: group.to_string(),
            intercept: true,
            slopes: Vec::new(),
            correlated: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.intercept as usize + self.slopes.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.intercept {
            v.push("(Intercept)".to_string());
        }
        v.extend(self.slopes.iter().cloned());
        v
    }

    /// Free covariance parameters.
    pub fn n_cov_params(&self) -> usize {
        let r = self.dim();
        if self.correlated {
            r * (r + 1) / 2
        } else {
            r
        }
    }

    fn describe(&self) -> String {
        let mut lhs: Vec<String> = Vec::new();
        if !self.intercept {
            lhs.push("0".into());
        } else {
            lhs.push("1".into());
        }
        lhs.extend(self.slopes.iter().cloned());
        let bar = if self.correlated || self.dim() == 1 { "|" } else { "||" };
        format!("({} {bar} {})", lhs.join(" + "), self.group)
    }
}

/// Expanded model specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalSpec {
    pub levels: usize,
    pub fixed: Vec<String>,
    pub random: Vec<RandomTerm>,
}

impl OrdinalSpec {
    pub fn n_params(&self) -> usize {
        self.levels - 1 + self.fixed.len() + self.random.iter().map(|t| t.n_cov_params()).sum::<usize>()
    }

    /// Canonical one-line description, used to check nesting.
    pub fn describe(&self, response: &str) -> String {
        let mut terms: Vec<String> = if self.fixed.is_empty() {
            vec!["1".into()]
        } else {
            self.fixed.clone()
        };
        terms.extend(self.random.iter().map(|t| t.describe()));
        format!("{response} ~ {}", terms.join(" + "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FitMethod {
    Exact,
    Aghq { nodes: usize },
    Laplace,
}

/// Estimated random-effect covariance for one term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarComp {
    pub group: String,
    pub columns: Vec<String>,
    pub sd: Vec<f64>,
    pub variance: Vec<f64>,
    /// Row-major correlation matrix; present for correlated terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Some standard deviation collapsed to the zero boundary.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalFit {
    pub formula: String,
    pub levels: usize,
    pub n_obs: usize,
    pub thresholds: Vec<f64>,
    pub threshold_se: Vec<Option<f64>>,
    pub fixed_names: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub varcomp: Vec<VarComp>,
    pub loglik: f64,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub max_gradient: f64,
    pub method: FitMethod,
    pub spec: OrdinalSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<String>,
}

impl OrdinalFit {
    pub fn z_values(&self) -> Vec<Option<f64>> {
        self.beta
            .iter()
            .zip(&self.std_errors)
            .map(|(b, se)| se.map(|s| b / s))
            .collect()
    }

    /// Two-sided normal p-values for the fixed effects.
    pub fn p_values(&self) -> Vec<Option<f64>> {
        self.z_values()
            .into_iter()
            .map(|z| z.map(|z| chisq_sf(z * z, 1).unwrap_or(f64::NAN)))
            .collect()
    }

    pub fn aic(&self) -> f64 {
        -2.0 * self.loglik + 2.0 * self.n_params as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Human-readable summary.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let method = match self.method {
            FitMethod::Exact => "exact".to_string(),
            FitMethod::Aghq { nodes } => format!("adaptive Gauss-Hermite, {nodes} nodes"),
            FitMethod::Laplace => "Laplace".to_string(),
        };
        let _ = writeln!(out, "Cumulative link model (logit)  {}", self.formula);
        let _ = writeln!(
            out,
            "n = {}  levels = {}  method = {}  converged = {}",
            self.n_obs, self.levels, method, self.converged
        );
        let _ = writeln!(
            out,
            "logLik = {:.4}  AIC = {:.2}  parameters = {}",
            self.loglik,
            self.aic(),
            self.n_params
        );
        if !self.varcomp.is_empty() {
            let _ = writeln!(out, "\nRandom effects:");
            for vc in &self.varcomp {
                for (c, (sd, var)) in vc.columns.iter().zip(vc.sd.iter().zip(&vc.variance)) {
                    let _ = writeln!(out, "  {:<14} {:<22} var = {:.4}  sd = {:.4}", vc.group, c, var, sd);
                }
                if vc.boundary {
                    let _ = writeln!(out, "  ({}: estimate on the zero-variance boundary)", vc.group);
                }
            }
        }
        if !self.beta.is_empty() {
            let _ = writeln!(out, "\nFixed effects:");
            let z = self.z_values();
            let p = self.p_values();
            for i in 0..self.beta.len() {
                let fmt = |v: Option<f64>, prec: usize| {
                    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "NA".into())
                };
                let _ = writeln!(
                    out,
                    "  {:<22} beta = {:.2}  se = {}  z = {}  {}",
                    self.fixed_names[i],
                    self.beta[i],
                    fmt(self.std_errors[i], 3),
                    fmt(z[i], 2),
                    p[i].map(format_p).unwrap_or_else(|| "NA".into())
                );
            }
        }
        let _ = writeln!(out, "\nThresholds:");
        for (j, t) in self.thresholds.iter().enumerate() {
            let _ = writeln!(out, "  {}|{}  {:.4}", j + 1, j + 2, t);
        }
        for m in &self.messages {
            let _ = writeln!(out, "note: {m}");
        }
        out
    }
}

/// `p<0.001` style rendering used in reports.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p<0.001".to_string()
    } else {
        format!("p={p:.3}")
    }
}

/// Validated numeric model: response, fixed design and random blocks.
pub(crate) struct Model {
    pub levels: usize,
    pub y: Vec<usize>,
    pub x: DMatrix<f64>,
    pub blocks: Vec<Block>,
}

/// One random-effect term resolved against the data.
pub(crate) struct Block {
    pub n_levels: usize,
    pub level_of: Vec<usize>,
    /// n x r random design.
    pub z: DMatrix<f64>,
    pub correlated: bool,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_cov_params(&self) -> usize {
        let r = self.dim();
        if self.correlated {
            r * (r + 1) / 2
        } else {
            r
        }
    }

    /// Lower-triangular factor from its free parameters: log-diagonal first,
    /// then the strict lower triangle row by row.
    pub fn lambda(&self, params: &[f64]) -> DMatrix<f64> {
        let r = self.dim();
        let mut l = DMatrix::zeros(r, r);
        for i in 0..r {
            l[(i, i)] = params[i].exp();
        }
        if self.correlated {
            let mut k = r;
            for i in 0..r {
                for j in 0..i {
                    l[(i, j)] = params[k];
                    k += 1;
                }
            }
        }
        l
    }
}

impl Model {
    pub fn build(data: &OrdinalData, spec: &OrdinalSpec) -> Result<Self, OrdinalError> {
        if spec.levels != data.levels {
            return Err(OrdinalError::IllPosed(format!(
                "spec has {} levels but data has {}",
                spec.levels, data.levels
            )));
        }
        if data.n_obs() == 0 {
            return Err(OrdinalError::IllPosed("no observations".into()));
        }
        let x = data.design(&spec.fixed)?;
        check_rank(&x)?;
        let mut blocks = Vec::new();
        for t in &spec.random {
            let g = data
                .group(&t.group)
                .ok_or_else(|| OrdinalError::UnknownGroup(t.group.clone()))?;
            if t.dim() == 0 {
                return Err(OrdinalError::IllPosed(format!("empty random term for {}", t.group)));
            }
            let slopes = data.design(&t.slopes)?;
            let n = data.n_obs();
            let z = DMatrix::from_fn(n, t.dim(), |i, j| {
                if t.intercept {
                    if j == 0 {
                        1.0
                    } else {
                        slopes[(i, j - 1)]
                    }
                } else {
                    slopes[(i, j)]
                }
            });
            blocks.push(Block {
                n_levels: g.levels.len(),
                level_of: g.index.clone(),
                z,
                correlated: t.correlated,
            });
        }
        Ok(Self {
            levels: data.levels,
            y: data.response.clone(),
            x,
            blocks,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }
}

/// `[1 | X]` must have full column rank.
fn check_rank(x: &DMatrix<f64>) -> Result<(), OrdinalError> {
    let (n, p) = x.shape();
    if p == 0 {
        return Ok(());
    }
    if n < p + 1 {
        return Err(OrdinalError::RankDeficient);
    }
    let mut aug = DMatrix::zeros(n, p + 1);
    aug.column_mut(0).fill(1.0);
    aug.columns_mut(1, p).copy_from(x);
    // scale columns so the test is unit free
    for mut c in aug.column_iter_mut() {
        let norm = c.norm();
        if norm == 0.0 {
            return Err(OrdinalError::RankDeficient);
        }
        c /= norm;
    }
    let gram = aug.transpose() * &aug;
    let eig = crate::linalg::symmetric_eigen(&gram);
    let max = eig.values[0];
    let min = eig.values[p];
    if min <= 1e-10 * max {
        return Err(OrdinalError::RankDeficient);
    }
    Ok(())
}

/// Maps `(θ_1, δ_2, ...)` to increasing thresholds.
pub(crate) fn thresholds_from_free(free: &[f64]) -> Vec<f64> {
    let mut th = Vec::with_capacity(free.len());
    let mut acc = 0.0;
    for (j, &v) in free.iter().enumerate() {
        acc = if j == 0 { v } else { acc + v.exp() };
        th.push(acc);
    }
    th
}

/// Inverse of [`thresholds_from_free`]; input must be strictly increasing.
pub(crate) fn free_from_thresholds(th: &[f64]) -> Vec<f64> {
    th.iter()
        .enumerate()
        .map(|(j, &t)| if j == 0 { t } else { (t - th[j - 1]).ln() })
        .collect()
}

/// Jacobian of thresholds with respect to their free parameters.
pub(crate) fn threshold_jacobian(free: &[f64]) -> DMatrix<f64> {
    let m = free.len();
    DMatrix::from_fn(m, m, |j, k| {
        if k == 0 {
            1.0
        } else if k <= j {
            free[k].exp()
        } else {
            0.0
        }
    })
}
