//! Mini formula language: `response ~ a + b + (1 + a | g) + (1 | h)`.
//!
//! Fixed terms are column or factor names (`1` is accepted and ignored,
//! since thresholds carry the intercept). A random term's left side lists
//! slopes, with an implicit intercept unless it starts with `0`. `||`
//! requests independent effects; `|` follows the caller's default.

use serde::{Deserialize, Serialize};

use super::{OrdinalData, OrdinalError, OrdinalSpec, RandomTerm};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub group: String,
    pub intercept: bool,
    pub terms: Vec<String>,
    pub independent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub response: String,
    pub fixed: Vec<String>,
    pub random: Vec<RandomSpec>,
}

fn err(msg: impl Into<String>) -> OrdinalError {
    OrdinalError::Formula(msg.into())
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | ':'))
        && !s.starts_with(|c: char| c.is_ascii_digit())
}

/// Splits on top-level `+`, keeping parenthesized groups whole.
fn split_terms(rhs: &str) -> Result<Vec<String>, OrdinalError> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in rhs.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(err("unbalanced ')'"));
                }
            }
            '+' if depth == 0 => {
                out.push(std::mem::take(&mut cur).trim().to_string());
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if depth != 0 {
        return Err(err("unbalanced '('"));
    }
    out.push(cur.trim().to_string());
    if out.iter().any(|t| t.is_empty()) {
        return Err(err("empty term"));
    }
    Ok(out)
}

fn parse_random(inner: &str) -> Result<RandomSpec, OrdinalError> {
    let (lhs, rhs, independent) = if let Some((l, r)) = inner.split_once("||") {
        (l, r, true)
    } else if let Some((l, r)) = inner.split_once('|') {
        (l, r, false)
    } else {
        return Err(err(format!("random term ({inner}) lacks '|'")));
    };
    let group = rhs.trim();
    if !is_name(group) {
        return Err(err(format!("bad grouping factor {group:?}")));
    }
    let mut intercept = true;
    let mut terms = Vec::new();
    for (i, t) in lhs.split('+').map(str::trim).enumerate() {
        match t {
            "1" => intercept = true,
            "0" if i == 0 => intercept = false,
            _ if is_name(t) => {
                if terms.iter().any(|x| x == t) {
                    return Err(err(format!("duplicate slope {t}")));
                }
                terms.push(t.to_string())
            }
            _ => return Err(err(format!("bad random-effect term {t:?}"))),
        }
    }
    if !intercept && terms.is_empty() {
        return Err(err(format!("random term for {group} has no effects")));
    }
    Ok(RandomSpec {
        group: group.to_string(),
        intercept,
        terms,
        independent,
    })
}

pub fn parse_formula(text: &str) -> Result<Formula, OrdinalError> {
    let (lhs, rhs) = text.split_once('~').ok_or_else(|| err("missing '~'"))?;
    let response = lhs.trim();
    if !is_name(response) {
        return Err(err(format!("bad response {response:?}")));
    }
    let mut fixed = Vec::new();
    let mut random = Vec::new();
    for term in split_terms(rhs)? {
        if let Some(inner) = term.strip_prefix('(') {
            let inner = inner
                .strip_suffix(')')
                .ok_or_else(|| err(format!("bad term {term:?}")))?;
            let r = parse_random(inner)?;
            if random.iter().any(|x: &RandomSpec| x.group == r.group) {
                return Err(err(format!("grouping factor {} repeated", r.group)));
            }
            random.push(r);
        } else if term == "1" {
            continue;
        } else if is_name(&term) {
            if fixed.contains(&term) {
                return Err(err(format!("duplicate term {term}")));
            }
            fixed.push(term);
        } else {
            return Err(err(format!("bad term {term:?}")));
        }
    }
    Ok(Formula {
        response: response.to_string(),
        fixed,
        random,
    })
}

impl Formula {
    /// Resolves factors to their dummy columns. `correlated` applies to
    /// multi-effect terms written with a single bar.
    pub fn to_spec(&self, data: &OrdinalData, correlated: bool) -> Result<OrdinalSpec, OrdinalError> {
        if self.response != data.response_name {
            return Err(OrdinalError::UnknownColumn(self.response.clone()));
        }
        let expand = |names: &[String]| -> Result<Vec<String>, OrdinalError> {
            let mut out = Vec::new();
            for n in names {
                out.extend(data.expand(n)?);
            }
            Ok(out)
        };
        let fixed = expand(&self.fixed)?;
        let mut random = Vec::new();
        for r in &self.random {
            if data.group(&r.group).is_none() {
                return Err(OrdinalError::UnknownGroup(r.group.clone()));
            }
            let slopes = expand(&r.terms)?;
            let dim = r.intercept as usize + slopes.len();
            random.push(RandomTerm {
                group: r.group.clone(),
                intercept: r.intercept,
                slopes,
                correlated: correlated && !r.independent && dim > 1,
            });
        }
        Ok(OrdinalSpec {
            levels: data.levels,
            fixed,
            random,
        })
    }
}
