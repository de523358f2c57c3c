//! Box-constrained Levenberg-Marquardt least squares with a finite-difference
//! Jacobian. Sized for the handful of parameters the fitters in this crate use.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which an accepted step ends the fit.
    pub ftol: f64,
    /// Relative parameter change below which an accepted step ends the fit.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient below which the fit ends.
    pub gtol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            ftol: 1e-14,
            xtol: 1e-12,
            gtol: 1e-14,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// `0.5 * sum r_i^2` at `params`.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// `(J^T J)^-1` at the solution, if invertible. Multiply by the residual
    /// variance for unweighted problems.
    pub jtj_inverse: Option<DMatrix<f64>>,
}

impl LmReport {
    pub fn rms(&self) -> f64 {
        (2.0 * self.cost / self.residuals.len().max(1) as f64).sqrt()
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], lower: &[f64], upper: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = 1e-7 * x[k].abs().max(1e-6);
        let up_ok = x[k] + h <= upper[k];
        let down_ok = x[k] - h >= lower[k];
        let col: Vec<f64> = if up_ok && down_ok {
            xp[k] = x[k] + h;
            let rp = f(&xp);
            xp[k] = x[k] - h;
            let rm = f(&xp);
            rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        } else if up_ok {
            xp[k] = x[k] + h;
            f(&xp).iter().zip(r0).map(|(a, b)| (a - b) / h).collect()
        } else {
            xp[k] = x[k] - h;
            r0.iter().zip(f(&xp)).map(|(a, b)| (a - b) / h).collect()
        };
        xp[k] = x[k];
        for i in 0..m {
            jac[(i, k)] = col[i];
        }
    }
    jac
}

/// Minimizes `0.5 * |f(x)|^2` subject to `lower <= x <= upper`.
///
/// Steps are projected onto the box. On non-convergence the error carries the
/// best parameters found.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LmOptions) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Precondition("bounds length must match parameter count".into()));
    }
    let mut x = x0.to_vec();
    clamp(&mut x, lower, upper);
    let mut r = f(&x);
    if r.len() < n {
        return Err(Error::Precondition(format!("{} residuals for {} parameters", r.len(), n)));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("residuals are not finite at the initial point".into()));
    }
    let mut cost = cost_of(&r);
    let mut lambda = opts.initial_damping;
    let mut nu = 2.0;
    let mut jac = jacobian(&f, &x, &r, lower, upper);

    for iter in 1..=opts.max_iterations {
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let diag: Vec<f64> = (0..n).map(|k| jtj[(k, k)]).collect();
        let dmax = diag.iter().copied().fold(0.0, f64::max);
        if dmax == 0.0 {
            return Err(Error::Degenerate("residuals do not depend on any parameter".into()));
        }
        let scaled_grad = (0..n)
            .map(|k| grad[k].abs() / diag[k].max(1e-300).sqrt())
            .fold(0.0, f64::max);
        if scaled_grad <= opts.gtol * (2.0 * cost).sqrt().max(1e-300) || cost == 0.0 {
            return Ok(finish(x, cost, r, iter, &jtj));
        }

        let mut accepted = false;
        while !accepted {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * diag[k].max(1e-12 * dmax);
            }
            let Some(step) = a.clone().cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e30 {
                    break;
                }
                continue;
            };
            let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut xn, lower, upper);
            let rn = f(&xn);
            let cn = cost_of(&rn);
            if cn.is_finite() && cn < cost {
                // predicted reduction for the gain ratio
                let actual: DVector<f64> = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
                let pred = -(grad.dot(&actual)) - 0.5 * (actual.transpose() * &jtj * &actual)[(0, 0)];
                let rho = if pred > 0.0 { (cost - cn) / pred } else { 1.0 };
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let rel_f = (cost - cn) / cost.max(1e-300);
                let rel_x = actual
                    .iter()
                    .zip(&x)
                    .map(|(d, v)| d.abs() / (v.abs() + opts.xtol))
                    .fold(0.0, f64::max);
                x = xn;
                r = rn;
                cost = cn;
                accepted = true;
                if rel_f < opts.ftol || rel_x < opts.xtol {
                    let jac_end = jacobian(&f, &x, &r, lower, upper);
                    let jtj_end = jac_end.transpose() * &jac_end;
                    return Ok(finish(x, cost, r, iter, &jtj_end));
                }
            } else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e30 {
                    break;
                }
            }
        }
        if !accepted {
            // damping exhausted: no descent direction left at this precision
            return Ok(finish(x, cost, r, iter, &jtj));
        }
        jac = jacobian(&f, &x, &r, lower, upper);
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        cost,
        best: x,
    })
}

fn finish(params: Vec<f64>, cost: f64, residuals: Vec<f64>, iterations: usize, jtj: &DMatrix<f64>) -> LmReport {
    LmReport {
        params,
        cost,
        residuals,
        iterations,
        jtj_inverse: jtj.clone().try_inverse(),
    }
}

/// Ordinary least-squares line `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition("linear fit needs at least two paired samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae are equal".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((a, b, r2))
}
