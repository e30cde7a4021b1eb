//! Fixed-effects cumulative link model fitted by Newton's method with
//! analytic derivatives.

use nalgebra::{DMatrix, DVector};

use super::special::{logistic, logit, softplus};
use super::{
    free_from_thresholds, threshold_jacobian, thresholds_from_free, FitMethod, Model, OrdinalData, OrdinalError,
    OrdinalFit, OrdinalSpec,
};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// Log-probability of one observation and its derivatives with respect to
/// `a = θ_y - η` and `b = θ_{y-1} - η`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ObsTerms {
    pub ll: f64,
    pub la: f64,
    pub lb: f64,
    pub laa: f64,
    pub lbb: f64,
    pub lab: f64,
}

impl ObsTerms {
    pub fn d_eta(&self) -> f64 {
        -(self.la + self.lb)
    }

    pub fn d2_eta(&self) -> f64 {
        self.laa + 2.0 * self.lab + self.lbb
    }
}

/// `y` is 1-based; `theta` holds the `levels - 1` thresholds.
pub(crate) fn obs_terms(y: usize, theta: &[f64], eta: f64) -> ObsTerms {
    let k = theta.len() + 1;
    let upper = (y < k).then(|| theta[y - 1] - eta);
    let lower = (y > 1).then(|| theta[y - 2] - eta);
    // log f(x) - log p, with f the logistic density
    let ll = match (upper, lower) {
        (Some(a), None) => -softplus(-a),
        (None, Some(b)) => -softplus(b),
        (Some(a), Some(b)) => -softplus(-a) - softplus(b) + (-(b - a).exp_m1()).ln(),
        (None, None) => 0.0,
    };
    let log_density = |x: f64| -softplus(-x) - softplus(x);
    let (mut la, mut laa) = (0.0, 0.0);
    if let Some(a) = upper {
        la = (log_density(a) - ll).exp();
        laa = la * (1.0 - 2.0 * logistic(a)) - la * la;
    }
    let (mut lb, mut lbb) = (0.0, 0.0);
    if let Some(b) = lower {
        lb = -(log_density(b) - ll).exp();
        lbb = lb * (1.0 - 2.0 * logistic(b)) - lb * lb;
    }
    ObsTerms {
        ll,
        la,
        lb,
        laa,
        lbb,
        lab: -la * lb,
    }
}

/// Log-likelihood, gradient and Hessian in the natural parameters
/// `(θ_1..θ_{K-1}, β)`.
fn natural_derivatives(model: &Model, theta: &[f64], beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let m = theta.len();
    let p = beta.len();
    let mut g = DVector::zeros(m + p);
    let mut h = DMatrix::zeros(m + p, m + p);
    let mut ll = 0.0;
    let beta_v = DVector::from_column_slice(beta);
    let eta = &model.x * &beta_v;
    for i in 0..model.n_obs() {
        let y = model.y[i];
        let t = obs_terms(y, theta, eta[i]);
        ll += t.ll;
        let ia = (y <= m).then(|| y - 1);
        let ib = (y >= 2).then(|| y - 2);
        if let Some(a) = ia {
            g[a] += t.la;
            h[(a, a)] += t.laa;
        }
        if let Some(b) = ib {
            g[b] += t.lb;
            h[(b, b)] += t.lbb;
        }
        if let (Some(a), Some(b)) = (ia, ib) {
            h[(a, b)] += t.lab;
            h[(b, a)] += t.lab;
        }
        let xi = model.x.row(i);
        let de = t.d_eta();
        let dee = t.d2_eta();
        for c in 0..p {
            g[m + c] += de * xi[c];
            for d in 0..p {
                h[(m + c, m + d)] += dee * xi[c] * xi[d];
            }
            if let Some(a) = ia {
                let v = -(t.laa + t.lab) * xi[c];
                h[(a, m + c)] += v;
                h[(m + c, a)] += v;
            }
            if let Some(b) = ib {
                let v = -(t.lab + t.lbb) * xi[c];
                h[(b, m + c)] += v;
                h[(m + c, b)] += v;
            }
        }
    }
    (ll, g, h)
}

/// Derivatives in the optimization parameters `(θ_1, δ_2.., β)`.
fn free_derivatives(model: &Model, free: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let m = model.levels - 1;
    let theta = thresholds_from_free(&free[..m]);
    let (ll, g, h) = natural_derivatives(model, &theta, &free[m..]);
    let p = free.len() - m;
    let mut jac = DMatrix::identity(m + p, m + p);
    jac.view_mut((0, 0), (m, m)).copy_from(&threshold_jacobian(&free[..m]));
    let gf = jac.transpose() * &g;
    let mut hf = jac.transpose() * h * &jac;
    for k in 1..m {
        let curv: f64 = (k..m).map(|j| g[j]).sum::<f64>() * free[k].exp();
        hf[(k, k)] += curv;
    }
    (ll, gf, hf)
}

fn prepare(data: &OrdinalData, spec: &OrdinalSpec) -> Result<Model, OrdinalError> {
    if !spec.random.is_empty() {
        return Err(OrdinalError::IllPosed(
            "clm_fit takes no random terms; use clmm_fit".into(),
        ));
    }
    Model::build(data, spec)
}

/// Log-likelihood at free parameters `(θ_1, log-gaps.., β)`.
pub fn clm_loglik(data: &OrdinalData, spec: &OrdinalSpec, free: &[f64]) -> Result<f64, OrdinalError> {
    let model = prepare(data, spec)?;
    Ok(free_derivatives(&model, free).0)
}

/// Analytic gradient at free parameters `(θ_1, log-gaps.., β)`.
pub fn clm_gradient(data: &OrdinalData, spec: &OrdinalSpec, free: &[f64]) -> Result<Vec<f64>, OrdinalError> {
    let model = prepare(data, spec)?;
    Ok(free_derivatives(&model, free).1.iter().copied().collect())
}

/// Starting thresholds from smoothed cumulative proportions.
pub(crate) fn start_thresholds(levels: usize, y: &[usize]) -> Vec<f64> {
    let mut counts = vec![0.5; levels];
    for &v in y {
        counts[v - 1] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let mut acc = 0.0;
    let mut th = Vec::with_capacity(levels - 1);
    for c in counts.iter().take(levels - 1) {
        acc += c;
        th.push(logit(acc / total));
    }
    th
}

pub(crate) struct NewtonResult {
    pub free: Vec<f64>,
    pub loglik: f64,
    pub hessian: DMatrix<f64>,
    pub max_gradient: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn newton(model: &Model, start: Vec<f64>) -> NewtonResult {
    let mut free = start;
    let (mut ll, mut g, mut h) = free_derivatives(model, &free);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        if g.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let neg_h = -&h;
        let mut ridge = 0.0;
        let step = loop {
            let mut a = neg_h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += ridge;
            }
            if let Some(ch) = a.cholesky() {
                break ch.solve(&g);
            }
            ridge = if ridge == 0.0 { 1e-8 * neg_h.diagonal().amax().max(1.0) } else { ridge * 10.0 };
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = free.iter().zip(step.iter()).map(|(x, s)| x + t * s).collect();
            let (tl, tg, th) = free_derivatives(model, &trial);
            if tl.is_finite() && tl >= ll - 1e-12 * ll.abs().max(1.0) {
                let improved = tl > ll || tg.amax() < g.amax();
                free = trial;
                ll = tl;
                g = tg;
                h = th;
                moved = improved;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            converged = g.amax() < GRAD_TOL;
            break;
        }
    }
    NewtonResult {
        free,
        loglik: ll,
        hessian: h,
        max_gradient: g.amax(),
        iterations,
        converged,
    }
}

/// Standard errors of thresholds and coefficients from the observed
/// information in the free parameterization.
pub(crate) fn standard_errors(hessian: &DMatrix<f64>, free: &[f64], m: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let n = free.len();
    let info = -hessian;
    let cov = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => return (vec![None; m], vec![None; n - m]),
    };
    let jac = threshold_jacobian(&free[..m]);
    let cov_th = &jac * cov.view((0, 0), (m, m)) * jac.transpose();
    let se = |v: f64| (v.is_finite() && v >= 0.0).then(|| v.sqrt());
    let th = (0..m).map(|j| se(cov_th[(j, j)])).collect();
    let beta = (m..n).map(|j| se(cov[(j, j)])).collect();
    (th, beta)
}

/// Maximum-likelihood fit without random effects.
pub fn clm_fit(data: &OrdinalData, spec: &OrdinalSpec) -> Result<OrdinalFit, OrdinalError> {
    let model = prepare(data, spec)?;
    let m = model.levels - 1;
    let mut start = free_from_thresholds(&start_thresholds(model.levels, &model.y));
    start.extend(std::iter::repeat_n(0.0, model.n_fixed()));
    let res = newton(&model, start);

    let mut messages = Vec::new();
    let mut converged = res.converged;
    if !converged {
        messages.push(format!(
            "Newton stopped after {} iterations with max |gradient| {:.3e}",
            res.iterations, res.max_gradient
        ));
    }
    let missing: Vec<usize> = data
        .level_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(j, _)| j + 1)
        .collect();
    if !missing.is_empty() {
        converged = false;
        messages.push(format!(
            "response level(s) {missing:?} never observed; adjacent thresholds are not identified"
        ));
    }
    let (threshold_se, std_errors) = standard_errors(&res.hessian, &res.free, m);
    Ok(OrdinalFit {
        formula: spec.describe(&data.response_name),
        levels: model.levels,
        n_obs: model.n_obs(),
        thresholds: thresholds_from_free(&res.free[..m]),
        threshold_se,
        fixed_names: spec.fixed.clone(),
        beta: res.free[m..].to_vec(),
        std_errors,
        varcomp: Vec::new(),
        loglik: res.loglik,
        n_params: spec.n_params(),
        converged,
        iterations: res.iterations,
        max_gradient: res.max_gradient,
        method: FitMethod::Exact,
        spec: spec.clone(),
        messages,
    })
}
