//! Quasi-Newton minimization: BFGS with a backtracking Armijo line
//! search, numeric gradients and a numeric Hessian for standard errors.
//!
//! The objective only has to return a value (`+inf` marks an infeasible
//! point); gradients use central differences with step `1e-6 * max(1,
//! |x|)`, the Hessian `1e-4 * max(1, |x|)`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_f_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            relative_f_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Gradient criterion met (as opposed to stalling on f-changes).
    pub converged: bool,
}

/// Central-difference gradient.
pub fn gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian (symmetrized).
pub fn hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut h = vec![0.0; n];
    for i in 0..n {
        h[i] = 1e-4 * x[i].abs().max(1.0);
    }
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        // diagonal: (f(x+h) - 2 f(x) + f(x-h)) / h^2
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..n {
            xp[i] = x[i] + h[i];
            xp[j] = x[j] + h[j];
            let fpp = f(&xp);
            xp[j] = x[j] - h[j];
            let fpm = f(&xp);
            xp[i] = x[i] - h[i];
            xp[j] = x[j] + h[j];
            let fmp = f(&xp);
            xp[j] = x[j] - h[j];
            let fmm = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Minimize `f` from `x0`. Infeasible starts (non-finite `f(x0)`) return
/// immediately with `converged = false`.
pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return BfgsResult {
            x: x0.to_vec(),
            f: fx,
            gradient_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    let mut g = DVector::from_vec(gradient(&mut f, x.as_slice()));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut iterations = 0;

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let gnorm = g.norm();
        if gnorm < opts.gradient_tolerance {
            return BfgsResult {
                x: x.as_slice().to_vec(),
                f: fx,
                gradient_norm: gnorm,
                iterations: iter,
                converged: true,
            };
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            // reset a corrupted curvature model
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
        }

        // Armijo backtracking.
        let mut alpha = 1.0;
        let c1 = 1e-4;
        let mut x_new;
        let mut f_new;
        loop {
            x_new = &x + alpha * &dir;
            f_new = f(x_new.as_slice());
            if f_new.is_finite() && f_new <= fx + c1 * alpha * slope {
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-16 {
                // no acceptable step along this direction
                return BfgsResult {
                    x: x.as_slice().to_vec(),
                    f: fx,
                    gradient_norm: gnorm,
                    iterations: iter,
                    converged: gnorm < opts.gradient_tolerance,
                };
            }
        }

        let g_new = DVector::from_vec(gradient(&mut f, x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                let scale = sy / y.dot(&y);
                if scale.is_finite() && scale > 0.0 {
                    h_inv = DMatrix::identity(n, n) * scale;
                }
                first_update = false;
            }
            let rho = 1.0 / sy;
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h_inv = &h_inv - (&hys + hys.transpose()) * rho + &ss * (rho * rho * yhy + rho);
        }

        let f_drop = (fx - f_new).abs();
        x = x_new;
        fx = f_new;
        g = g_new;
        if f_drop <= opts.relative_f_tolerance * (1.0 + fx.abs()) {
            break;
        }
    }
    let gnorm = g.norm();
    BfgsResult {
        x: x.as_slice().to_vec(),
        f: fx,
        gradient_norm: gnorm,
        iterations,
        converged: gnorm < opts.gradient_tolerance,
    }
}
