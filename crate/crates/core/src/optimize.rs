//! Levenberg–Marquardt least squares with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative step norm falls below this.
    pub x_tol: f64,
    /// Stop when the relative cost decrease falls below this.
    pub f_tol: f64,
    /// Finite-difference step relative to max(|x|, 1).
    pub diff_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            x_tol: 1e-14,
            f_tol: 1e-28,
            diff_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub x: DVector<f64>,
    /// ½‖r‖².
    pub cost: f64,
    pub iterations: usize,
}

fn jacobian<F>(f: &F, x: &DVector<f64>, r0: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut j = DMatrix::zeros(r0.len(), x.len());
    for k in 0..x.len() {
        let h = step * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

/// Minimizes ½‖f(x)‖² from `x0`.
pub fn levenberg_marquardt<F>(f: F, x0: DVector<f64>, opts: &LmOptions) -> Result<LmResult>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0;
    let mut r = f(&x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("residual not finite at the initial guess".into()));
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    for it in 1..=opts.max_iterations {
        let j = jacobian(&f, &x, &r, opts.diff_step);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.clone().cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = f(&xn);
            let cn = 0.5 * rn.norm_squared();
            if cn.is_finite() && cn <= cost {
                let small_step = step.norm() <= opts.x_tol * (x.norm() + opts.x_tol);
                let small_gain = cost - cn <= opts.f_tol * cost.max(1e-300) || cn == 0.0;
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small_step || small_gain {
                    return Ok(LmResult { x, cost, iterations: it });
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: at a (numerical) minimum
            if g.norm() <= 1e-6 * (cost.sqrt() + 1e-300) * jtj.norm().sqrt() || lambda > 1e12 {
                return Ok(LmResult { x, cost, iterations: it });
            }
            return Err(Error::FitFailed(format!("no descent step at iteration {it}")));
        }
    }
    Err(Error::FitFailed(format!(
        "no convergence within {} iterations (cost {cost:e})",
        opts.max_iterations
    )))
}
