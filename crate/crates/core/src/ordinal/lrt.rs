//! Likelihood-ratio tests between nested ordinal fits.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{chisq_sf, format_p, OrdinalError, OrdinalFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub null_formula: String,
    pub full_formula: String,
}

impl fmt::Display for LrtResult {
    /// `χ²(7) = 126.64, p<0.001`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "χ²({}) = {:.2}, {}", self.df, self.statistic, format_p(self.p_value))
    }
}

impl LrtResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Compares `null` against `full`; every fixed column and random effect of
/// the null model must also appear in the full model.
pub fn lrt(null: &OrdinalFit, full: &OrdinalFit) -> Result<LrtResult, OrdinalError> {
    if null.n_obs != full.n_obs || null.levels != full.levels {
        return Err(OrdinalError::NotNested("fits use different data".into()));
    }
    if null.n_params >= full.n_params {
        return Err(OrdinalError::NotNested(format!(
            "null has {} parameters, full has {}",
            null.n_params, full.n_params
        )));
    }
    if let Some(c) = null.spec.fixed.iter().find(|c| !full.spec.fixed.contains(c)) {
        return Err(OrdinalError::NotNested(format!("fixed term {c} missing from full model")));
    }
    for t in &null.spec.random {
        let Some(ft) = full.spec.random.iter().find(|f| f.group == t.group) else {
            return Err(OrdinalError::NotNested(format!("random term for {} missing from full model", t.group)));
        };
        let cols = ft.column_names();
        if t.column_names().iter().any(|c| !cols.contains(c)) || (t.correlated && !ft.correlated) {
            return Err(OrdinalError::NotNested(format!("random term for {} is not nested", t.group)));
        }
    }
    let statistic = (2.0 * (full.loglik - null.loglik)).max(0.0);
    let df = full.n_params - null.n_params;
    Ok(LrtResult {
        statistic,
        df,
        p_value: chisq_sf(statistic, df)?,
        null_formula: null.formula.clone(),
        full_formula: full.formula.clone(),
    })
}
