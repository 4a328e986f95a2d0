//! Damped Gauss-Newton iteration for small nonlinear least-squares systems,
//! with a numerically differenced Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct NewtonOpts {
    pub max_iter: usize,
    /// Convergence threshold on the residual infinity norm.
    pub tol_inf: f64,
    /// Relative step for the forward-difference Jacobian.
    pub fd_step: f64,
    pub max_backtracks: usize,
    /// When set, only the first `hard_len` residual entries must reach
    /// `tol_inf`; the remainder are soft terms that shape the least-squares
    /// objective without blocking convergence.
    pub hard_len: Option<usize>,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        Self {
            max_iter: 60,
            tol_inf: 1e-10,
            fd_step: 1e-7,
            max_backtracks: 14,
            hard_len: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub resid_inf: f64,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|r| r.abs()).fold(0.0, f64::max)
}

fn two_norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum()
}

/// Minimizes `|f(x)|` from `x0`. The step solves the linearized
/// least-squares problem through an SVD pseudo-inverse, so over- and
/// under-determined systems are both handled; backtracking halves the step
/// until the residual decreases.
pub fn least_squares_newton<F>(mut f: F, x0: &[f64], opts: &NewtonOpts) -> NewtonResult
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut best = NewtonResult {
        x: x.clone(),
        resid_inf: inf_norm(&r),
        converged: inf_norm(&r) <= opts.tol_inf,
    };
    if best.converged {
        return best;
    }

    for _ in 0..opts.max_iter {
        let m = r.len();
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = opts.fd_step * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let rp = f(&xp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rhs = DVector::from_column_slice(&r);
        let svd = jac.svd(true, true);
        let delta = match svd.solve(&rhs, 1e-12) {
            Ok(d) => d,
            Err(_) => break,
        };

        let base_sq = two_norm_sq(&r);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(j, xj)| xj - alpha * delta[j])
                .collect();
            let rt = f(&trial);
            if two_norm_sq(&rt) < base_sq {
                x = trial;
                r = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        let inf = inf_norm(&r);
        if inf < best.resid_inf {
            best = NewtonResult {
                x: x.clone(),
                resid_inf: inf,
                converged: inf <= opts.tol_inf,
            };
        }
        if inf <= opts.tol_inf {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_simple_system() {
        // r = (x^2 + y^2 - 4, x - y)
        let f = |u: &[f64]| vec![u[0] * u[0] + u[1] * u[1] - 4.0, u[0] - u[1]];
        let res = least_squares_newton(f, &[1.0, 0.5], &NewtonOpts::default());
        assert!(res.converged);
        assert!((res.x[0].abs() - (2.0f64).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn handles_underdetermined() {
        // One equation, two unknowns.
        let f = |u: &[f64]| vec![u[0] + 2.0 * u[1] - 1.0];
        let res = least_squares_newton(f, &[3.0, -1.0], &NewtonOpts::default());
        assert!(res.converged);
        assert!((res.x[0] + 2.0 * res.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reports_failure_on_infeasible() {
        // r = x^2 + 1 has no zero.
        let f = |u: &[f64]| vec![u[0] * u[0] + 1.0];
        let res = least_squares_newton(f, &[2.0], &NewtonOpts::default());
        assert!(!res.converged);
    }
}
