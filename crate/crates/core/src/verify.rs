//! Independent numerical verification: residual curves, suppression-order
//! fits, error-ratio thresholds, and the finite-difference oracle that
//! cross-checks the symbolic expansion.

use rayon::prelude::*;
use thiserror::Error;

use crate::series::EpsJet;
use crate::su2::{qsp_eval, success_prob, PhaseSequence, Unitary2};
use crate::synth::{higher_order_recovery, SynthConfig, SynthError};

/// Residuals at or below this value are roundoff-dominated and excluded from
/// slope fits.
pub const NUMERICAL_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("slope fit needs at least 4 points above the numerical floor, got {0}")]
    TooFewPoints(usize),
}

/// Chebyshev nodes on (0, pi): `theta_i = pi (2i + 1) / (2n)`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| std::f64::consts::PI * (2.0 * i as f64 + 1.0) / (2.0 * n as f64))
        .collect()
}

/// Geometrically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

/// Worst-case success-probability deviation per noise value:
/// `max_theta | |<0|U_eps R_eps|0>|^2 - |<0|U_0|0>|^2 |`.
#[derive(Clone, Debug)]
pub struct ResidualCurve {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub grid: usize,
}

/// Evaluates the residual curve for `seq` with an optional recovery sequence
/// appended. The reference is always the noiseless bare sequence.
pub fn residual_curve(
    seq: &PhaseSequence,
    recovery: Option<&PhaseSequence>,
    theta_grid: usize,
    epsilons: &[f64],
) -> ResidualCurve {
    assert!(
        epsilons.windows(2).all(|w| w[0] < w[1]) && epsilons.iter().all(|&e| e > 0.0),
        "epsilons must be positive and ascending"
    );
    let nodes = chebyshev_nodes(theta_grid);
    let composite = recovery.map(|r| seq.concat(r));
    let target = composite.as_ref().unwrap_or(seq);
    let ideal: Vec<f64> = nodes
        .iter()
        .map(|&t| success_prob(&qsp_eval(seq, t, 0.0)))
        .collect();
    let residuals: Vec<f64> = epsilons
        .par_iter()
        .map(|&eps| {
            nodes
                .iter()
                .zip(ideal.iter())
                .map(|(&t, &p0)| (success_prob(&qsp_eval(target, t, eps)) - p0).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    ResidualCurve {
        epsilons: epsilons.to_vec(),
        residuals,
        grid: theta_grid,
    }
}

/// Least-squares slope of `log(residual)` against `log(eps)`, restricted to
/// points above [`NUMERICAL_FLOOR`].
pub fn fit_order(curve: &ResidualCurve) -> Result<f64, VerifyError> {
    fit_order_of(&curve.epsilons, &curve.residuals)
}

pub fn fit_order_of(epsilons: &[f64], values: &[f64]) -> Result<f64, VerifyError> {
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(values.iter())
        .filter(|(_, &r)| r > NUMERICAL_FLOOR)
        .map(|(&e, &r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(VerifyError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Error ratio after/before recovery as a function of the noise magnitude,
/// with the first sampled crossing of 1.
#[derive(Clone, Debug)]
pub struct ThresholdReport {
    pub k: usize,
    pub epsilons: Vec<f64>,
    /// `None` where the bare residual sits below the numerical floor.
    pub ratios: Vec<Option<f64>>,
    /// Smallest sampled eps with ratio >= 1, if any.
    pub eps_star: Option<f64>,
    /// True when the bare sequence shows no error anywhere (nothing to
    /// correct, ratio undefined).
    pub degenerate: bool,
    pub plan_length: usize,
}

/// Threshold scan over 48 log-spaced points in [1e-4, 1].
pub fn threshold(
    seq: &PhaseSequence,
    k: usize,
    theta_grid: usize,
    cfg: &SynthConfig,
) -> Result<ThresholdReport, SynthError> {
    let plan = higher_order_recovery(seq, k, cfg)?;
    let epsilons = log_spaced(1e-4, 1.0, 48);
    let bare = residual_curve(seq, None, theta_grid, &epsilons);
    let flat = plan.flatten();
    let with = residual_curve(seq, Some(&flat), theta_grid, &epsilons);
    let ratios: Vec<Option<f64>> = bare
        .residuals
        .iter()
        .zip(with.residuals.iter())
        .map(|(&b, &w)| (b > NUMERICAL_FLOOR).then(|| w / b))
        .collect();
    let degenerate = ratios.iter().all(|r| r.is_none());
    let eps_star = epsilons
        .iter()
        .zip(ratios.iter())
        .find(|(_, r)| matches!(r, Some(v) if *v >= 1.0))
        .map(|(&e, _)| e);
    Ok(ThresholdReport {
        k,
        epsilons,
        ratios,
        eps_star,
        degenerate,
        plan_length: plan.w_len(),
    })
}

/// Central finite-difference estimates of the eps-Taylor coefficients of
/// `qsp_eval` at `eps = 0`, one per order `1..=k`, with one Richardson
/// refinement. Entirely independent of the symbolic jet path.
pub fn fd_oracle(
    seq: &PhaseSequence,
    theta_grid: &[f64],
    k: usize,
    h: f64,
) -> Vec<Vec<Unitary2>> {
    assert!((1e-6..=1e-3).contains(&h), "h must lie in [1e-6, 1e-3]");
    assert!((1..=3).contains(&k), "orders above 3 are not supported");

    let comb = |a: &Unitary2, b: &Unitary2, ca: f64, cb: f64| -> Unitary2 {
        let mut m = [[num_complex::Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = a.m[r][c] * ca + b.m[r][c] * cb;
            }
        }
        Unitary2::new(m)
    };
    let rescale = |a: &Unitary2, f: f64| -> Unitary2 {
        let mut m = a.m;
        for row in &mut m {
            for z in row.iter_mut() {
                *z *= f;
            }
        }
        Unitary2::new(m)
    };

    let per_theta = |theta: f64| -> Vec<Unitary2> {
        let u = |eps: f64| qsp_eval(seq, theta, eps);
        let richardson = |f: &dyn Fn(f64) -> Unitary2| -> Unitary2 {
            // Both stencils have O(h^2) error: (4 A(h/2) - A(h)) / 3.
            comb(&f(h / 2.0), &f(h), 4.0 / 3.0, -1.0 / 3.0)
        };
        let mut out = Vec::with_capacity(k);
        // c_1 = f'(0)
        out.push(richardson(&|s| comb(&u(s), &u(-s), 0.5 / s, -0.5 / s)));
        if k >= 2 {
            // c_2 = f''(0) / 2
            let u0 = u(0.0);
            out.push(richardson(&|s| {
                let sum = comb(&u(s), &u(-s), 1.0, 1.0);
                comb(&sum, &u0, 0.5 / (s * s), -1.0 / (s * s))
            }));
        }
        if k >= 3 {
            // c_3 = f'''(0) / 6 via the five-point antisymmetric stencil.
            out.push(richardson(&|s| {
                let a = comb(&u(2.0 * s), &u(-2.0 * s), 1.0, -1.0);
                let b = comb(&u(s), &u(-s), 1.0, -1.0);
                let num = comb(&a, &b, 1.0, -2.0);
                rescale(&num, 1.0 / (12.0 * s * s * s))
            }));
        }
        out
    };

    let per_order: Vec<Vec<Unitary2>> = theta_grid.par_iter().map(|&t| per_theta(t)).collect();
    // Transpose to [order][grid].
    (0..k)
        .map(|ord| per_order.iter().map(|v| v[ord]).collect())
        .collect()
}

/// Worst mixed error between the jet coefficients and the finite-difference
/// oracle over a theta grid, orders `1..=k`. The mixed error of a pair of
/// matrices is the max-entry difference over `max(1, magnitudes)`.
pub fn jet_fd_agreement(seq: &PhaseSequence, theta_grid: &[f64], k: usize, h: f64) -> f64 {
    let jet = EpsJet::qsp(seq, k);
    let fd = fd_oracle(seq, theta_grid, k, h);
    let mut worst: f64 = 0.0;
    for ord in 1..=k {
        for (gi, &theta) in theta_grid.iter().enumerate() {
            let a = jet.coeff(ord).eval(theta);
            let b = fd[ord - 1][gi];
            let defect = a.max_abs_diff(&b);
            let scale = 1.0f64
                .max(a.m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max))
                .max(b.m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max));
            worst = worst.max(defect / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use num_complex::Complex64;

    #[test]
    fn chebyshev_nodes_avoid_endpoints() {
        let nodes = chebyshev_nodes(64);
        assert_eq!(nodes.len(), 64);
        assert!(nodes.iter().all(|&t| t > 0.0 && t < std::f64::consts::PI));
    }

    #[test]
    fn fit_order_exact_power_law() {
        let eps = log_spaced(1e-4, 1e-2, 9);
        let res: Vec<f64> = eps.iter().map(|e| 7.0 * e.powi(3)).collect();
        let slope = fit_order_of(&eps, &res).unwrap();
        assert!((slope - 3.0).abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn fit_order_dominated_term() {
        let eps = log_spaced(1e-4, 1e-2, 9);
        let res: Vec<f64> = eps.iter().map(|e| e + e.powi(4)).collect();
        let slope = fit_order_of(&eps, &res).unwrap();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn fit_order_floor_filtering() {
        let eps = log_spaced(1e-4, 1e-2, 6);
        let res = vec![0.0, 0.0, 0.0, 1e-3, 1e-3, 1e-3];
        assert!(matches!(
            fit_order_of(&eps, &res),
            Err(VerifyError::TooFewPoints(3))
        ));
    }

    #[test]
    fn residuals_zero_for_noise_immune_sequence() {
        let seq = PhaseSequence::new(vec![0.0; 5]).unwrap();
        let eps = log_spaced(1e-4, 1e-1, 6);
        let curve = residual_curve(&seq, None, 64, &eps);
        assert!(curve.residuals.iter().all(|&r| r < 1e-14));
    }

    #[test]
    fn bare_residual_slope_is_one() {
        let mut rng = SplitMix64::new(4);
        let seq = PhaseSequence::random_uniform(4, &mut rng);
        let eps = log_spaced(1e-4, 1e-2, 9);
        let curve = residual_curve(&seq, None, 128, &eps);
        let slope = fit_order(&curve).unwrap();
        assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn fd_oracle_single_rotation() {
        let phi = 0.9_f64;
        let seq = PhaseSequence::new(vec![phi]).unwrap();
        let fd = fd_oracle(&seq, &[0.3], 1, 1e-5);
        let want = Unitary2::new([
            [
                Complex64::new(0.0, phi) * Complex64::from_polar(1.0, phi),
                Complex64::new(0.0, 0.0),
            ],
            [
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, -phi) * Complex64::from_polar(1.0, -phi),
            ],
        ]);
        assert!(fd[0][0].max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn fd_oracle_zero_phases() {
        let seq = PhaseSequence::new(vec![0.0; 4]).unwrap();
        let grid = chebyshev_nodes(8);
        let fd = fd_oracle(&seq, &grid, 3, 1e-4);
        for per_order in &fd {
            for m in per_order {
                let zero = Unitary2::new([[Complex64::new(0.0, 0.0); 2]; 2]);
                assert!(m.max_abs_diff(&zero) < 1e-8);
            }
        }
    }

    #[test]
    fn jet_matches_fd_on_random_instances() {
        let mut rng = SplitMix64::new(99);
        let grid = chebyshev_nodes(12);
        for _ in 0..6 {
            let d = 1 + (rng.next_u64() % 6) as usize;
            let seq = PhaseSequence::random_uniform(d, &mut rng);
            for (k, h) in [(1usize, 1e-5), (2, 1e-4), (3, 1e-3)] {
                let err = jet_fd_agreement(&seq, &grid, k, h);
                let tol = 1e-6f64.max(1e3 * h * h);
                assert!(err <= tol, "d={d} k={k}: {err:.3e} > {tol:.1e}");
            }
        }
    }
}
