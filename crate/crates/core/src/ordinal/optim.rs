//! Quasi-Newton (BFGS) minimization with central-difference gradients, and a
//! finite-difference Hessian for observed information.

use nalgebra::{DMatrix, DVector};

pub(crate) struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-4,
            step: 1e-5,
        }
    }
}

pub(crate) struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub max_gradient: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let hi = h * x[i].abs().max(1.0);
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    g
}

/// Minimizes `f`; non-finite values are treated as +inf during line search.
pub(crate) fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: Vec<f64>, opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = DVector::from_vec(x0);
    let mut fx = f(x.as_slice());
    let mut g = fd_gradient(&mut f, x.as_slice(), opts.step);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    let mut stalls = 0;

    while iterations < opts.max_iter {
        if g.amax() < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        // keep the first trial step bounded
        let max_step = dir.amax();
        if max_step > 2.0 {
            dir *= 2.0 / max_step;
        }
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + &dir * t;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            // line search failed: restart from steepest descent once
            if stalls == 0 {
                stalls += 1;
                hinv = DMatrix::identity(n, n);
                continue;
            }
            break;
        };
        let gn = fd_gradient(&mut f, xn.as_slice(), opts.step);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if iterations == 1 {
                // scale the initial inverse Hessian
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let a = &eye - &s * y.transpose() * rho;
            let b = &eye - &y * s.transpose() * rho;
            hinv = a * &hinv * b + &s * s.transpose() * rho;
        }
        let small_change = (fx - fxn).abs() <= 1e-13 * fx.abs().max(1.0);
        x = xn;
        fx = fxn;
        g = gn;
        stalls = 0;
        if small_change && g.amax() < 100.0 * opts.grad_tol {
            converged = true;
            break;
        }
    }
    BfgsResult {
        max_gradient: g.amax(),
        x: x.iter().copied().collect(),
        f: fx,
        iterations,
        converged,
    }
}

/// Central second differences of `f` at `x`.
pub(crate) fn fd_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|v| h * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + steps[i];
        let fp = f(&xp);
        xp[i] = x[i] - steps[i];
        let fm = f(&xp);
        xp[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * steps[i];
                xp[j] = x[j] + sj * steps[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * steps[i] * steps[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}
