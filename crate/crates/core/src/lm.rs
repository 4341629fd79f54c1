//! Small Levenberg–Marquardt solvers with finite-difference derivatives.
//!
//! Two flavours: a least-squares form (Marquardt-scaled normal equations)
//! and a damped-Newton form for scalar costs that are not sums of squares.
//! Both only ever accept steps that lower the cost.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Finite-difference step per parameter.
    pub diff_step: f64,
    /// Convergence threshold on the step size (absolute, parameter units).
    pub step_tolerance: f64,
    /// Convergence threshold on the relative cost decrease.
    pub cost_tolerance: f64,
    /// Per-parameter bound on a single step; `None` for unbounded.
    pub max_step: Option<Vec<f64>>,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            diff_step: 1e-6,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-15,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub x: DVector<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_DAMPING: f64 = 1e14;

fn clamp_step(delta: &mut DVector<f64>, max_step: &Option<Vec<f64>>) {
    if let Some(bounds) = max_step {
        for (d, b) in delta.iter_mut().zip(bounds) {
            *d = d.clamp(-b, *b);
        }
    }
}

/// Minimize `sum_i r_i(x)^2`.
pub fn least_squares<F>(residuals: F, x0: DVector<f64>, opts: &LmOptions) -> LmResult
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = residuals(&x);
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    if !cost.is_finite() {
        return LmResult { x, cost, initial_cost, iterations: 0, converged: false };
    }
    let mut mu = 1e-3;
    for it in 0..opts.max_iterations {
        if cost == 0.0 {
            return LmResult { x, cost, initial_cost, iterations: it, converged: true };
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += opts.diff_step;
            xm[k] -= opts.diff_step;
            let col = (residuals(&xp) - residuals(&xm)) / (2.0 * opts.diff_step);
            jac.set_column(k, &col);
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &r;
        if g.iter().all(|v| *v == 0.0) || g.iter().any(|v| !v.is_finite()) {
            return LmResult { x, cost, initial_cost, iterations: it, converged: g.iter().all(|v| v.is_finite()) };
        }
        loop {
            let mut damped = a.clone();
            for k in 0..n {
                damped[(k, k)] += mu * a[(k, k)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 4.0;
                if mu > MAX_DAMPING {
                    return LmResult { x, cost, initial_cost, iterations: it, converged: true };
                }
                continue;
            };
            let mut delta = -chol.solve(&g);
            clamp_step(&mut delta, &opts.max_step);
            let x_new = &x + &delta;
            let r_new = residuals(&x_new);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                let decrease = cost - cost_new;
                x = x_new;
                r = r_new;
                cost = cost_new;
                mu = (mu / 3.0).max(1e-12);
                if decrease <= opts.cost_tolerance * cost.max(f64::MIN_POSITIVE)
                    || delta.amax() <= opts.step_tolerance
                {
                    return LmResult { x, cost, initial_cost, iterations: it + 1, converged: true };
                }
                break;
            }
            mu *= 4.0;
            if mu > MAX_DAMPING {
                return LmResult { x, cost, initial_cost, iterations: it + 1, converged: true };
            }
        }
    }
    LmResult { x, cost, initial_cost, iterations: opts.max_iterations, converged: false }
}

/// Minimize a scalar cost with a Levenberg-damped Newton iteration on a
/// central-difference gradient and Hessian.
pub fn minimize_scalar<F>(cost_fn: F, x0: DVector<f64>, opts: &LmOptions) -> LmResult
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let h = opts.diff_step;
    let mut x = x0;
    let mut cost = cost_fn(&x);
    let initial_cost = cost;
    if !cost.is_finite() {
        return LmResult { x, cost, initial_cost, iterations: 0, converged: false };
    }
    let mut mu: Option<f64> = None;
    for it in 0..opts.max_iterations {
        if cost == 0.0 {
            return LmResult { x, cost, initial_cost, iterations: it, converged: true };
        }
        let shifted = |x: &DVector<f64>, i: usize, di: f64, j: usize, dj: f64| {
            let mut y = x.clone();
            y[i] += di;
            y[j] += dj;
            cost_fn(&y)
        };
        let mut g = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let fp = shifted(&x, i, h, i, 0.0);
            let fm = shifted(&x, i, -h, i, 0.0);
            g[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * cost + fm) / (h * h);
            for j in 0..i {
                let v = (shifted(&x, i, h, j, h) - shifted(&x, i, h, j, -h) - shifted(&x, i, -h, j, h)
                    + shifted(&x, i, -h, j, -h))
                    / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        if g.iter().any(|v| !v.is_finite()) || hess.iter().any(|v| !v.is_finite()) {
            return LmResult { x, cost, initial_cost, iterations: it, converged: false };
        }
        if g.iter().all(|v| *v == 0.0) {
            return LmResult { x, cost, initial_cost, iterations: it, converged: true };
        }
        let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(1e-6, f64::max);
        let mut damping = mu.unwrap_or(1e-3 * scale);
        loop {
            let mut damped = hess.clone();
            for k in 0..n {
                damped[(k, k)] += damping;
            }
            let Some(chol) = damped.cholesky() else {
                damping = damping.max(1e-9 * scale) * 4.0;
                if damping > MAX_DAMPING * scale {
                    return LmResult { x, cost, initial_cost, iterations: it, converged: true };
                }
                continue;
            };
            let mut delta = -chol.solve(&g);
            clamp_step(&mut delta, &opts.max_step);
            let x_new = &x + &delta;
            let cost_new = cost_fn(&x_new);
            if cost_new.is_finite() && cost_new < cost {
                let decrease = cost - cost_new;
                x = x_new;
                cost = cost_new;
                mu = Some((damping / 3.0).max(1e-12 * scale));
                if delta.amax() <= opts.step_tolerance || decrease <= opts.cost_tolerance * cost.max(f64::MIN_POSITIVE) {
                    return LmResult { x, cost, initial_cost, iterations: it + 1, converged: true };
                }
                break;
            }
            damping = damping.max(1e-9 * scale) * 4.0;
            if damping > MAX_DAMPING * scale || delta.amax() <= opts.step_tolerance {
                return LmResult { x, cost, initial_cost, iterations: it + 1, converged: true };
            }
        }
    }
    LmResult { x, cost, initial_cost, iterations: opts.max_iterations, converged: false }
}
