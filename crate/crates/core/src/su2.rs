//! Signal and processing operators, and exact evaluation of noisy or
//! noiseless QSP sequences as 2x2 unitaries.
//!
//! A length-`d` sequence with phases `(phi_0, ..., phi_d)` evaluates to
//! `e^{i phi_0 Z} * prod_{j=1..d} W(theta) e^{i phi_j Z}` with the signal
//! operator `W(theta) = e^{i theta X}`. Under multiplicative noise every
//! phase executes as `phi * (1 + eps)`; `W` is noiseless.

use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::rng::SplitMix64;

/// Tolerance used when counting distinct phases modulo 2*pi.
pub const PHASE_DISTINCT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("phase sequence must contain at least one angle")]
    Empty,
    #[error("phase angle at index {0} is not finite")]
    NonFinite(usize),
}

/// A 2x2 complex matrix; construction sites keep these unitary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2 {
    pub m: [[Complex64; 2]; 2],
}

impl Unitary2 {
    pub fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        Self::diag(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn diag(a: Complex64, b: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self::new([[a, zero], [zero, b]])
    }

    pub fn pauli_x() -> Self {
        let (z, o) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        Self::new([[z, o], [o, z]])
    }

    pub fn pauli_y() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self::new([[z, Complex64::new(0.0, -1.0)], [Complex64::new(0.0, 1.0), z]])
    }

    pub fn pauli_z() -> Self {
        Self::diag(Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0))
    }

    pub fn mul(&self, rhs: &Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &rhs.m;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Unitary2::new(out)
    }

    pub fn adjoint(&self) -> Unitary2 {
        Unitary2::new([
            [self.m[0][0].conj(), self.m[1][0].conj()],
            [self.m[0][1].conj(), self.m[1][1].conj()],
        ])
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Max-entry norm of `U U^dag - I`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.mul(&self.adjoint());
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((p.m[r][c] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Max-entry distance to another matrix.
    pub fn max_abs_diff(&self, other: &Unitary2) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        worst
    }
}

impl std::ops::Mul for Unitary2 {
    type Output = Unitary2;
    fn mul(self, rhs: Unitary2) -> Unitary2 {
        Unitary2::mul(&self, &rhs)
    }
}

/// Ordered QSP phase angles `(phi_0, ..., phi_d)`.
///
/// Angles are stored unreduced: the noise model multiplies the stored value,
/// so `phi` and `phi + 2*pi` behave differently under `eps`. Reduction modulo
/// 2*pi happens only when counting distinct phases.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSequence {
    phases: Vec<f64>,
}

impl PhaseSequence {
    pub fn new(phases: Vec<f64>) -> Result<Self, PhaseError> {
        if phases.is_empty() {
            return Err(PhaseError::Empty);
        }
        if let Some(i) = phases.iter().position(|p| !p.is_finite()) {
            return Err(PhaseError::NonFinite(i));
        }
        Ok(Self { phases })
    }

    /// The trivial length-0 sequence (a single zero phase, i.e. identity).
    pub fn empty() -> Self {
        Self { phases: vec![0.0] }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Number of signal-operator applications.
    pub fn d(&self) -> usize {
        self.phases.len() - 1
    }

    /// Number of distinct phases modulo 2*pi (tolerance [`PHASE_DISTINCT_TOL`]).
    pub fn unique_phase_count(&self) -> usize {
        let mut reduced: Vec<f64> = self
            .phases
            .iter()
            .map(|p| {
                let mut r = p.rem_euclid(TAU);
                // Values within tolerance of 2*pi wrap to 0.
                if TAU - r < PHASE_DISTINCT_TOL {
                    r = 0.0;
                }
                r
            })
            .collect();
        reduced.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut count = 1;
        for w in reduced.windows(2) {
            if w[1] - w[0] > PHASE_DISTINCT_TOL {
                count += 1;
            }
        }
        count
    }

    /// All phases multiplied by `factor` (e.g. `1 + eps`).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            phases: self.phases.iter().map(|p| p * factor).collect(),
        }
    }

    /// Concatenation: the joining phases are summed so that the evaluation of
    /// the result equals the matrix product of the parts for every
    /// `(theta, eps)`.
    pub fn concat(&self, other: &PhaseSequence) -> Self {
        let mut phases = self.phases.clone();
        let last = phases.last_mut().unwrap();
        *last += other.phases[0];
        phases.extend_from_slice(&other.phases[1..]);
        Self { phases }
    }

    /// Random sequence with phases uniform in [-pi, pi].
    pub fn random_uniform(d: usize, rng: &mut SplitMix64) -> Self {
        let phases = (0..=d)
            .map(|_| rng.uniform(-std::f64::consts::PI, std::f64::consts::PI))
            .collect();
        Self { phases }
    }
}

/// Signal operator `W(theta) = e^{i theta X}`.
pub fn signal_w(theta: f64) -> Unitary2 {
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::new(0.0, theta.sin());
    Unitary2::new([[c, s], [s, c]])
}

/// Noisy processing rotation `e^{i phi (1 + eps) Z}`.
pub fn z_rot(phi: f64, eps: f64) -> Unitary2 {
    let a = phi * (1.0 + eps);
    Unitary2::diag(Complex64::from_polar(1.0, a), Complex64::from_polar(1.0, -a))
}

/// Evaluates the sequence at signal angle `theta` under noise `eps`.
pub fn qsp_eval(seq: &PhaseSequence, theta: f64, eps: f64) -> Unitary2 {
    let phases = seq.phases();
    let w = signal_w(theta);
    let mut u = z_rot(phases[0], eps);
    for &phi in &phases[1..] {
        u = u.mul(&w).mul(&z_rot(phi, eps));
    }
    u
}

/// Success probability `|<0|U|0>|^2`.
pub fn success_prob(u: &Unitary2) -> f64 {
    u.m[0][0].norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn assert_close(u: &Unitary2, v: &Unitary2, tol: f64) {
        assert!(
            u.max_abs_diff(v) <= tol,
            "matrices differ by {:.3e}:\n{:?}\n{:?}",
            u.max_abs_diff(v),
            u,
            v
        );
    }

    #[test]
    fn signal_w_at_zero_is_identity() {
        assert_close(&signal_w(0.0), &Unitary2::identity(), 1e-15);
    }

    #[test]
    fn signal_w_at_half_pi_is_ix() {
        let mut ix = Unitary2::pauli_x();
        for r in 0..2 {
            for c in 0..2 {
                ix.m[r][c] *= Complex64::new(0.0, 1.0);
            }
        }
        assert_close(&signal_w(FRAC_PI_2), &ix, 1e-15);
    }

    #[test]
    fn signal_w_at_quarter_pi() {
        let u = signal_w(FRAC_PI_4);
        let h = 0.5f64.sqrt();
        assert!((u.m[0][0] - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!((u.m[0][1] - Complex64::new(0.0, h)).norm() < 1e-15);
    }

    #[test]
    fn z_rot_zero_phase_is_noise_immune() {
        for eps in [-0.5, 0.0, 0.3, 1.0] {
            assert_close(&z_rot(0.0, eps), &Unitary2::identity(), 1e-15);
        }
    }

    #[test]
    fn z_rot_known_values() {
        let mut iz = Unitary2::pauli_z();
        for r in 0..2 {
            iz.m[r][r] *= Complex64::new(0.0, 1.0);
        }
        assert_close(&z_rot(FRAC_PI_2, 0.0), &iz, 1e-15);
        // pi/4 doubled by eps = 1 is again a pi/2 rotation.
        assert_close(&z_rot(FRAC_PI_4, 1.0), &iz, 1e-15);
    }

    #[test]
    fn zero_phases_give_chebyshev_cosine() {
        let seq = PhaseSequence::new(vec![0.0; 4]).unwrap();
        for i in 0..1000 {
            let theta = PI * (i as f64 + 0.5) / 1000.0;
            let u = qsp_eval(&seq, theta, 0.37);
            assert!((u.m[0][0].re - (3.0 * theta).cos()).abs() < 1e-12);
            assert!(u.m[0][0].im.abs() < 1e-12);
        }
    }

    #[test]
    fn noise_transfer_identity() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let d = 1 + (rng.next_u64() % 8) as usize;
            let seq = PhaseSequence::random_uniform(d, &mut rng);
            let theta = rng.uniform(0.0, PI);
            let eps = rng.uniform(-0.9, 0.9);
            let noisy = qsp_eval(&seq, theta, eps);
            let rescaled = qsp_eval(&seq.scaled(1.0 + eps), theta, 0.0);
            assert!(noisy.max_abs_diff(&rescaled) < 1e-12);
        }
    }

    #[test]
    fn concat_matches_matrix_product() {
        let mut rng = SplitMix64::new(23);
        for _ in 0..25 {
            let a = PhaseSequence::random_uniform(3, &mut rng);
            let b = PhaseSequence::random_uniform(4, &mut rng);
            let theta = rng.uniform(0.0, PI);
            let eps = rng.uniform(-0.2, 0.2);
            let joint = qsp_eval(&a.concat(&b), theta, eps);
            let prod = qsp_eval(&a, theta, eps).mul(&qsp_eval(&b, theta, eps));
            assert!(joint.max_abs_diff(&prod) < 1e-12);
        }
    }

    #[test]
    fn unitarity_everywhere() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let d = (rng.next_u64() % 12) as usize;
            let seq = PhaseSequence::random_uniform(d, &mut rng);
            let u = qsp_eval(&seq, rng.uniform(0.0, PI), rng.uniform(-0.5, 0.5));
            assert!(u.unitarity_error() < 1e-12);
            assert!((u.det().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn success_prob_basics() {
        assert!((success_prob(&Unitary2::identity()) - 1.0).abs() < 1e-15);
        let mut ix = Unitary2::pauli_x();
        for r in 0..2 {
            for c in 0..2 {
                ix.m[r][c] *= Complex64::new(0.0, 1.0);
            }
        }
        assert!(success_prob(&ix).abs() < 1e-15);
        assert!((success_prob(&signal_w(FRAC_PI_4)) - 0.5).abs() < 1e-15);
    }

    // Independent straight-line product for the fixed-point search sequence
    // (pi/3, pi/3, pi/3, pi/3): multiply the seven factors out explicitly and
    // check both qsp_eval and the ideal amplification curve 1 - (1-a)^3.
    #[test]
    fn grover_fixed_point_ideal_curve() {
        let phi = PI / 3.0;
        for i in 0..257 {
            let a = i as f64 / 256.0;
            let theta = a.sqrt().clamp(0.0, 1.0).acos();

            let zr = |p: f64| {
                [
                    [Complex64::from_polar(1.0, p), Complex64::new(0.0, 0.0)],
                    [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, -p)],
                ]
            };
            let w = [
                [Complex64::new(theta.cos(), 0.0), Complex64::new(0.0, theta.sin())],
                [Complex64::new(0.0, theta.sin()), Complex64::new(theta.cos(), 0.0)],
            ];
            let mm = |x: [[Complex64; 2]; 2], y: [[Complex64; 2]; 2]| {
                let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        out[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c];
                    }
                }
                out
            };
            let mut u = zr(phi);
            for _ in 0..3 {
                u = mm(u, w);
                u = mm(u, zr(phi));
            }

            let seq = PhaseSequence::new(vec![phi; 4]).unwrap();
            let lib = qsp_eval(&seq, theta, 0.0);
            assert!((lib.m[0][0] - u[0][0]).norm() < 1e-13);

            let ideal = 1.0 - (1.0 - a).powi(3);
            assert!(
                (u[0][0].norm_sqr() - ideal).abs() < 1e-12,
                "a = {a}: |P0|^2 = {} vs {}",
                u[0][0].norm_sqr(),
                ideal
            );
        }
    }

    #[test]
    fn unique_phase_count_modular() {
        let seq = PhaseSequence::new(vec![0.1, 0.1 + TAU, 0.2, -0.3 + 2.0 * TAU]).unwrap();
        assert_eq!(seq.unique_phase_count(), 3);
        let seq = PhaseSequence::new(vec![0.0]).unwrap();
        assert_eq!(seq.unique_phase_count(), 1);
        // Wraparound: values just below 2*pi coincide with 0.
        let seq = PhaseSequence::new(vec![0.0, TAU - 1e-14]).unwrap();
        assert_eq!(seq.unique_phase_count(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(PhaseSequence::new(vec![]).unwrap_err(), PhaseError::Empty);
        assert_eq!(
            PhaseSequence::new(vec![0.0, f64::NAN]).unwrap_err(),
            PhaseError::NonFinite(1)
        );
    }
}
