//! Cumulative link mixed models: marginal likelihood by the Laplace
//! approximation or adaptive Gauss–Hermite quadrature, maximized over
//! thresholds, coefficients and log-scale covariance parameters.
//!
//! The inner problem finds the conditional mode of the spherical random
//! effects `b` (with `u = Λ b`). Its negative Hessian `I + Σ_i h_i w_i w_iᵀ`
//! is factorized by eliminating the random term with the most levels first:
//! that term is block diagonal, so only the remaining terms form a dense
//! Schur complement. Crossed designs such as annotator × item stay cheap.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::clm::{clm_fit, obs_terms, standard_errors, ObsTerms};
use super::optim::{bfgs, fd_hessian, BfgsOptions};
use super::quadrature::gauss_hermite;
use super::{
    free_from_thresholds, thresholds_from_free, Block, FitMethod, Model, OrdinalData, OrdinalError, OrdinalFit,
    OrdinalSpec, VarComp,
};

const INNER_MAX_ITER: usize = 100;
const INNER_TOL: f64 = 1e-10;
/// Standard deviations below this are tested against the zero boundary.
const BOUNDARY_PROBE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClmmOptions {
    pub method: FitMethod,
    /// Hold each term's random-effect standard deviations fixed (no
    /// correlation); only thresholds and coefficients are estimated.
    pub fixed_sd: Option<Vec<Vec<f64>>>,
    pub max_iter: usize,
}

impl Default for ClmmOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::Laplace,
            fixed_sd: None,
            max_iter: 500,
        }
    }
}

type Chol = Cholesky<f64, Dyn>;

/// Coordinates of the random effects: every block except the eliminated one
/// is "dense"; the eliminated block follows.
struct Layout {
    sparse: usize,
    dense_offset: Vec<usize>,
    q_dense: usize,
    q: usize,
}

impl Layout {
    fn new(blocks: &[Block]) -> Self {
        let sparse = blocks
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.n_levels.cmp(&b.1.n_levels).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut dense_offset = vec![0; blocks.len()];
        let mut off = 0;
        for (t, b) in blocks.iter().enumerate() {
            if t != sparse {
                dense_offset[t] = off;
                off += b.n_levels * b.dim();
            }
        }
        let q = off + blocks.get(sparse).map(|b| b.n_levels * b.dim()).unwrap_or(0);
        Self {
            sparse,
            dense_offset,
            q_dense: off,
            q,
        }
    }

    fn coord(&self, blocks: &[Block], t: usize, level: usize, c: usize) -> usize {
        let r = blocks[t].dim();
        if t == self.sparse {
            self.q_dense + level * r + c
        } else {
            self.dense_offset[t] + level * r + c
        }
    }
}

struct Factorization {
    level_chol: Vec<Chol>,
    coupling: Vec<Vec<(usize, DVector<f64>)>>,
    schur: Option<Chol>,
    logdet: f64,
}

impl Factorization {
    fn solve(&self, layout: &Layout, rs: usize, g: &DVector<f64>) -> DVector<f64> {
        let qd = layout.q_dense;
        let mut rhs_d = g.rows(0, qd).into_owned();
        let ys: Vec<DVector<f64>> = self
            .level_chol
            .iter()
            .enumerate()
            .map(|(l, ch)| ch.solve(&g.rows(qd + l * rs, rs).into_owned()))
            .collect();
        for (l, entries) in self.coupling.iter().enumerate() {
            for (a, u) in entries {
                rhs_d[*a] -= u.dot(&ys[l]);
            }
        }
        let dd = match &self.schur {
            Some(ch) => ch.solve(&rhs_d),
            None => rhs_d,
        };
        let mut out = DVector::zeros(g.len());
        out.rows_mut(0, qd).copy_from(&dd);
        for (l, ch) in self.level_chol.iter().enumerate() {
            let mut gs = g.rows(qd + l * rs, rs).into_owned();
            for (a, u) in &self.coupling[l] {
                gs -= u * dd[*a];
            }
            out.rows_mut(qd + l * rs, rs).copy_from(&ch.solve(&gs));
        }
        out
    }
}

/// Evaluates the approximate marginal log-likelihood for given parameters.
struct Evaluator<'a> {
    model: &'a Model,
    layout: Layout,
    method: FitMethod,
    nodes: Vec<(f64, f64)>,
    warm: DVector<f64>,
    inner_failures: usize,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a Model, method: FitMethod) -> Self {
        let layout = Layout::new(&model.blocks);
        let nodes = match method {
            FitMethod::Aghq { nodes } => {
                let (x, w) = gauss_hermite(nodes);
                x.into_iter().zip(w).collect()
            }
            _ => Vec::new(),
        };
        let q = layout.q;
        Self {
            model,
            layout,
            method,
            nodes,
            warm: DVector::zeros(q),
            inner_failures: 0,
        }
    }

    fn eta(&self, eta_fixed: &DVector<f64>, w: &[DMatrix<f64>], b: &DVector<f64>) -> DVector<f64> {
        let blocks = &self.model.blocks;
        let mut eta = eta_fixed.clone();
        for (t, blk) in blocks.iter().enumerate() {
            for i in 0..self.model.n_obs() {
                let l = blk.level_of[i];
                for c in 0..blk.dim() {
                    eta[i] += w[t][(i, c)] * b[self.layout.coord(blocks, t, l, c)];
                }
            }
        }
        eta
    }

    fn terms(&self, theta: &[f64], eta: &DVector<f64>) -> Vec<ObsTerms> {
        (0..self.model.n_obs())
            .map(|i| obs_terms(self.model.y[i], theta, eta[i]))
            .collect()
    }

    /// Gradient of the inner objective and the factorized negative Hessian.
    fn gradient_and_factor(
        &self,
        w: &[DMatrix<f64>],
        terms: &[ObsTerms],
        b: &DVector<f64>,
    ) -> Result<(DVector<f64>, Factorization), OrdinalError> {
        let blocks = &self.model.blocks;
        let lay = &self.layout;
        let s = lay.sparse;
        let rs = blocks[s].dim();
        let ls = blocks[s].n_levels;
        let qd = lay.q_dense;

        let mut g = -b.clone();
        let mut hdd = DMatrix::<f64>::identity(qd, qd);
        let mut hss = vec![DMatrix::<f64>::identity(rs, rs); ls];
        let mut coupling: Vec<BTreeMap<usize, DVector<f64>>> = vec![BTreeMap::new(); ls];
        let mut dense: Vec<(usize, f64)> = Vec::new();

        for (i, t_i) in terms.iter().enumerate() {
            let d1 = t_i.d_eta();
            let h = -t_i.d2_eta();
            dense.clear();
            for (t, blk) in blocks.iter().enumerate() {
                let l = blk.level_of[i];
                for c in 0..blk.dim() {
                    let v = w[t][(i, c)];
                    let idx = lay.coord(blocks, t, l, c);
                    g[idx] += d1 * v;
                    if t != s {
                        dense.push((idx, v));
                    }
                }
            }
            if h <= 0.0 {
                continue;
            }
            let lvl = blocks[s].level_of[i];
            let ws = w[s].row(i).transpose();
            hss[lvl] += &ws * ws.transpose() * h;
            for &(a, va) in &dense {
                for &(c, vc) in &dense {
                    hdd[(a, c)] += h * va * vc;
                }
                let entry = coupling[lvl].entry(a).or_insert_with(|| DVector::zeros(rs));
                *entry += &ws * (h * va);
            }
        }

        let mut logdet = 0.0;
        let mut level_chol = Vec::with_capacity(ls);
        for m in hss {
            let ch = m.cholesky().ok_or(OrdinalError::InnerNonConvergence)?;
            logdet += 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            level_chol.push(ch);
        }
        let coupling: Vec<Vec<(usize, DVector<f64>)>> =
            coupling.into_iter().map(|m| m.into_iter().collect()).collect();
        let schur = if qd > 0 {
            let mut sc = hdd;
            for (l, entries) in coupling.iter().enumerate() {
                let solved: Vec<DVector<f64>> = entries.iter().map(|(_, u)| level_chol[l].solve(u)).collect();
                for (a, u) in entries {
                    for (y, (c, _)) in entries.iter().enumerate() {
                        sc[(*a, *c)] -= u.dot(&solved[y]);
                    }
                }
            }
            let ch = sc.cholesky().ok_or(OrdinalError::InnerNonConvergence)?;
            logdet += 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            Some(ch)
        } else {
            None
        };
        Ok((
            g,
            Factorization {
                level_chol,
                coupling,
                schur,
                logdet,
            },
        ))
    }

    fn objective(terms: &[ObsTerms], b: &DVector<f64>) -> f64 {
        terms.iter().map(|t| t.ll).sum::<f64>() - 0.5 * b.norm_squared()
    }

    /// Approximate marginal log-likelihood.
    fn loglik(&mut self, theta: &[f64], beta: &[f64], lambdas: &[DMatrix<f64>]) -> Result<f64, OrdinalError> {
        let model = self.model;
        let eta_fixed = &model.x * DVector::from_column_slice(beta);
        if model.blocks.is_empty() {
            return Ok(self.terms(theta, &eta_fixed).iter().map(|t| t.ll).sum());
        }
        let w: Vec<DMatrix<f64>> = model.blocks.iter().zip(lambdas).map(|(b, l)| &b.z * l).collect();
        let rs = model.blocks[self.layout.sparse].dim();

        let mut b = self.warm.clone();
        if b.iter().any(|v| !v.is_finite()) {
            b.fill(0.0);
        }
        let mut terms = self.terms(theta, &self.eta(&eta_fixed, &w, &b));
        let mut obj = Self::objective(&terms, &b);
        if !obj.is_finite() {
            b.fill(0.0);
            terms = self.terms(theta, &self.eta(&eta_fixed, &w, &b));
            obj = Self::objective(&terms, &b);
        }
        let mut converged = false;
        let mut factor = None;
        for _ in 0..INNER_MAX_ITER {
            let (g, fac) = self.gradient_and_factor(&w, &terms, &b)?;
            if g.amax() < INNER_TOL {
                factor = Some(fac);
                converged = true;
                break;
            }
            let step = fac.solve(&self.layout, rs, &g);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..50 {
                let trial = &b + &step * t;
                let tt = self.terms(theta, &self.eta(&eta_fixed, &w, &trial));
                let tobj = Self::objective(&tt, &trial);
                if tobj.is_finite() && tobj >= obj - 1e-12 * obj.abs().max(1.0) {
                    b = trial;
                    terms = tt;
                    obj = tobj;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || (step.amax() * t) < INNER_TOL {
                let (_, fac) = self.gradient_and_factor(&w, &terms, &b)?;
                factor = Some(fac);
                converged = moved || g.amax() < 1e-6;
                break;
            }
        }
        let Some(factor) = factor.filter(|_| converged) else {
            self.inner_failures += 1;
            return Err(OrdinalError::InnerNonConvergence);
        };
        self.warm = b.clone();

        match self.method {
            FitMethod::Aghq { .. } => Ok(self.aghq(theta, &eta_fixed, &w, &b, &factor)),
            _ => Ok(obj - 0.5 * factor.logdet),
        }
    }

    /// Adaptive Gauss–Hermite rule per group for a single scalar random
    /// intercept, centred at the conditional mode.
    fn aghq(
        &self,
        theta: &[f64],
        eta_fixed: &DVector<f64>,
        w: &[DMatrix<f64>],
        b: &DVector<f64>,
        factor: &Factorization,
    ) -> f64 {
        let blk = &self.model.blocks[0];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); blk.n_levels];
        for (i, &l) in blk.level_of.iter().enumerate() {
            members[l].push(i);
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut total = 0.0;
        for (l, obs) in members.iter().enumerate() {
            let mode = b[l];
            let curvature = factor.level_chol[l].l_dirty()[(0, 0)].powi(2);
            let scale = 1.0 / curvature.sqrt();
            let group_obj = |v: f64| -> f64 {
                obs.iter()
                    .map(|&i| obs_terms(self.model.y[i], theta, eta_fixed[i] + w[0][(i, 0)] * v).ll)
                    .sum::<f64>()
                    - 0.5 * v * v
            };
            let logs: Vec<f64> = self
                .nodes
                .iter()
                .map(|&(x, wt)| wt.ln() + x * x + group_obj(mode + std::f64::consts::SQRT_2 * scale * x))
                .collect();
            let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logs.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            total += (scale / sqrt_pi).ln() + lse;
        }
        total
    }
}

fn validate(model: &Model, spec: &OrdinalSpec, method: FitMethod) -> Result<(), OrdinalError> {
    if spec.random.is_empty() {
        return Err(OrdinalError::IllPosed("clmm_fit needs at least one random term".into()));
    }
    match method {
        FitMethod::Aghq { nodes } => {
            if nodes == 0 {
                return Err(OrdinalError::IllPosed("quadrature needs at least one node".into()));
            }
            if model.blocks.len() != 1 || model.blocks[0].dim() != 1 {
                return Err(OrdinalError::IllPosed(
                    "adaptive quadrature supports a single random intercept only; use laplace".into(),
                ));
            }
        }
        FitMethod::Laplace => {}
        FitMethod::Exact => {
            return Err(OrdinalError::IllPosed("exact likelihood is only available without random terms".into()))
        }
    }
    Ok(())
}

/// Splits an optimizer vector into thresholds, coefficients and Λ factors.
struct Unpack<'a> {
    model: &'a Model,
    fixed_lambdas: Option<Vec<DMatrix<f64>>>,
}

impl Unpack<'_> {
    fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<DMatrix<f64>>) {
        let m = self.model.levels - 1;
        let p = self.model.n_fixed();
        let theta = thresholds_from_free(&x[..m]);
        let beta = x[m..m + p].to_vec();
        let lambdas = match &self.fixed_lambdas {
            Some(l) => l.clone(),
            None => {
                let mut off = m + p;
                self.model
                    .blocks
                    .iter()
                    .map(|b| {
                        let k = b.n_cov_params();
                        let l = b.lambda(&x[off..off + k]);
                        off += k;
                        l
                    })
                    .collect()
            }
        };
        (theta, beta, lambdas)
    }
}

fn diagonal_lambdas(model: &Model, sds: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>, OrdinalError> {
    if sds.len() != model.blocks.len() {
        return Err(OrdinalError::IllPosed(format!(
            "{} standard-deviation sets for {} random terms",
            sds.len(),
            model.blocks.len()
        )));
    }
    model
        .blocks
        .iter()
        .zip(sds)
        .map(|(b, sd)| {
            if sd.len() != b.dim() || sd.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(OrdinalError::IllPosed("invalid fixed standard deviations".into()));
            }
            Ok(DMatrix::from_diagonal(&DVector::from_column_slice(sd)))
        })
        .collect()
}

/// Approximate marginal log-likelihood at explicit parameter values with
/// diagonal random-effect covariances given as standard deviations.
pub fn marginal_loglik(
    data: &OrdinalData,
    spec: &OrdinalSpec,
    thresholds: &[f64],
    beta: &[f64],
    sds: &[Vec<f64>],
    method: FitMethod,
) -> Result<f64, OrdinalError> {
    let model = Model::build(data, spec)?;
    validate(&model, spec, method)?;
    if thresholds.len() != model.levels - 1 || beta.len() != model.n_fixed() {
        return Err(OrdinalError::IllPosed("parameter vector has the wrong length".into()));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OrdinalError::Domain("thresholds must be strictly increasing".into()));
    }
    let lambdas = diagonal_lambdas(&model, sds)?;
    Evaluator::new(&model, method).loglik(thresholds, beta, &lambdas)
}

pub fn clmm_fit(data: &OrdinalData, spec: &OrdinalSpec, method: FitMethod) -> Result<OrdinalFit, OrdinalError> {
    clmm_fit_with(
        data,
        spec,
        &ClmmOptions {
            method,
            ..ClmmOptions::default()
        },
    )
}

pub fn clmm_fit_with(data: &OrdinalData, spec: &OrdinalSpec, opts: &ClmmOptions) -> Result<OrdinalFit, OrdinalError> {
    let model = Model::build(data, spec)?;
    validate(&model, spec, opts.method)?;
    let m = model.levels - 1;
    let p = model.n_fixed();

    let fixed_only = OrdinalSpec {
        levels: spec.levels,
        fixed: spec.fixed.clone(),
        random: Vec::new(),
    };
    let start_fit = clm_fit(data, &fixed_only)?;
    let mut x0 = free_from_thresholds(&start_fit.thresholds);
    x0.extend_from_slice(&start_fit.beta);

    let fixed_lambdas = match &opts.fixed_sd {
        Some(sds) => Some(diagonal_lambdas(&model, sds)?),
        None => {
            for b in &model.blocks {
                let r = b.dim();
                x0.extend(std::iter::repeat_n(0.5f64.ln(), r));
                if b.correlated {
                    x0.extend(std::iter::repeat_n(0.0, r * (r - 1) / 2));
                }
            }
            None
        }
    };
    let unpack = Unpack {
        model: &model,
        fixed_lambdas,
    };
    let mut eval = Evaluator::new(&model, opts.method);
    let mut objective = |x: &[f64]| -> f64 {
        let (theta, beta, lambdas) = unpack.split(x);
        match eval.loglik(&theta, &beta, &lambdas) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let res = bfgs(
        &mut objective,
        x0,
        &BfgsOptions {
            max_iter: opts.max_iter,
            ..BfgsOptions::default()
        },
    );
    let mut x = res.x.clone();
    let mut best = res.f;
    let mut messages = Vec::new();
    if !res.converged {
        messages.push(format!(
            "quasi-Newton stopped after {} iterations with max |gradient| {:.3e}",
            res.iterations, res.max_gradient
        ));
    }

    // snap vanishing standard deviations onto the boundary
    let mut on_boundary = vec![false; x.len()];
    if opts.fixed_sd.is_none() {
        let mut off = m + p;
        for b in &model.blocks {
            for c in 0..b.dim() {
                let idx = off + c;
                if x[idx].exp() < BOUNDARY_PROBE {
                    let mut trial = x.clone();
                    trial[idx] = f64::NEG_INFINITY;
                    let f0 = objective(&trial);
                    if f0 <= best + 1e-8 {
                        x = trial;
                        best = f0;
                        on_boundary[idx] = true;
                    }
                }
            }
            off += b.n_cov_params();
        }
    }

    // observed information over the interior parameters
    let free_idx: Vec<usize> = (0..x.len()).filter(|&i| !on_boundary[i]).collect();
    let base = x.clone();
    let hess = fd_hessian(
        |sub: &[f64]| {
            let mut full = base.clone();
            for (k, &i) in free_idx.iter().enumerate() {
                full[i] = sub[k];
            }
            objective(&full)
        },
        &free_idx.iter().map(|&i| x[i]).collect::<Vec<_>>(),
        1e-4,
    );
    let (threshold_se, std_errors) = if hess.iter().all(|v| v.is_finite()) {
        let ll_hess = -hess;
        let lead = ll_hess.view((0, 0), (m + p, m + p)).into_owned();
        let marginal = marginal_information(&ll_hess, m + p).unwrap_or(lead);
        standard_errors(&marginal, &x[..m + p], m)
    } else {
        (vec![None; m], vec![None; p])
    };

    if eval.inner_failures > 0 {
        messages.push(format!(
            "{} outer evaluations rejected after inner mode search failed",
            eval.inner_failures
        ));
    }
    let (theta, beta, lambdas) = unpack.split(&x);
    let varcomp = spec
        .random
        .iter()
        .zip(&lambdas)
        .map(|(term, lam)| {
            let cov = lam * lam.transpose();
            let r = term.dim();
            let sd: Vec<f64> = (0..r).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
            let correlation = term.correlated.then(|| {
                (0..r)
                    .map(|i| {
                        (0..r)
                            .map(|j| {
                                if sd[i] > 0.0 && sd[j] > 0.0 {
                                    cov[(i, j)] / (sd[i] * sd[j])
                                } else if i == j {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect()
            });
            VarComp {
                group: term.group.clone(),
                columns: term.column_names(),
                variance: sd.iter().map(|s| s * s).collect(),
                boundary: sd.contains(&0.0) && opts.fixed_sd.is_none(),
                sd,
                correlation,
            }
        })
        .collect();

    Ok(OrdinalFit {
        formula: spec.describe(&data.response_name),
        levels: model.levels,
        n_obs: model.n_obs(),
        thresholds: theta,
        threshold_se,
        fixed_names: spec.fixed.clone(),
        beta,
        std_errors,
        varcomp,
        loglik: -best,
        n_params: if opts.fixed_sd.is_some() { m + p } else { spec.n_params() },
        converged: res.converged,
        iterations: res.iterations,
        max_gradient: res.max_gradient,
        method: opts.method,
        spec: spec.clone(),
        messages,
    })
}

/// Hessian block for the leading `k` parameters after accounting for the
/// remaining ones: the inverse of the leading block of the inverse.
/// Input and output are log-likelihood Hessians (negative definite).
fn marginal_information(loglik_hess: &DMatrix<f64>, k: usize) -> Option<DMatrix<f64>> {
    let info = -loglik_hess;
    let cov = info.cholesky()?.inverse();
    let lead = cov.view((0, 0), (k, k)).into_owned();
    let inv = lead.cholesky()?.inverse();
    Some(-inv)
}
