//! Lift to singular value transformation: one phase sequence (and one
//! recovery plan) applied across every singular-value subspace of a diagonal
//! block encoding.
//!
//! Qubitization reduces the transformation exactly to independent SU(2)
//! rotations, one per singular value `a` with signal angle `arccos(a)`.
//! Block encodings are therefore represented by their spectra alone.

use rayon::prelude::*;
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::su2::{qsp_eval, PhaseSequence, Unitary2};
use crate::verify::VerifyError;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("spectrum must contain at least one singular value")]
    Empty,
    #[error("singular value {0} is outside [0, 1]")]
    OutOfRange(f64),
}

/// Singular values of the block-encoded operator, each in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self, SpectrumError> {
        if values.is_empty() {
            return Err(SpectrumError::Empty);
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(SpectrumError::OutOfRange(v));
            }
        }
        Ok(Self { values })
    }

    /// Evenly spaced values including both endpoints (single value 0.5 for M = 1).
    pub fn uniform(m: usize) -> Self {
        assert!(m >= 1);
        if m == 1 {
            return Self { values: vec![0.5] };
        }
        Self {
            values: (0..m).map(|i| i as f64 / (m - 1) as f64).collect(),
        }
    }

    /// Chebyshev-node spectrum on (0, 1).
    pub fn chebyshev(m: usize) -> Self {
        assert!(m >= 1);
        Self {
            values: (0..m)
                .map(|i| {
                    0.5 + 0.5 * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) / (2.0 * m as f64)).cos()
                })
                .collect(),
        }
    }

    pub fn random(m: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::derive(seed, 0x5157);
        Self {
            values: (0..m).map(|_| rng.next_f64()).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Signal angles `theta_m = arccos(a_m)`.
    pub fn angles(&self) -> Vec<f64> {
        self.values.iter().map(|a| a.clamp(0.0, 1.0).acos()).collect()
    }
}

/// Applies the sequence in every singular-value subspace: element `m` is the
/// SU(2) rotation at `theta_m`. No cross-subspace coupling exists.
pub fn qsvt_apply(seq: &PhaseSequence, spectrum: &SingularSpectrum, eps: f64) -> Vec<Unitary2> {
    spectrum
        .angles()
        .par_iter()
        .map(|&theta| qsp_eval(seq, theta, eps))
        .collect()
}

/// Per-subspace verdict of the uniformity check.
#[derive(Clone, Debug)]
pub struct SubspaceReport {
    pub a: f64,
    pub theta: f64,
    pub max_residual: f64,
    /// Fitted suppression order; `None` when every residual sits below the
    /// numerical floor (the subspace carries no error to correct).
    pub slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct QsvtReport {
    pub k: usize,
    pub subspaces: Vec<SubspaceReport>,
}

impl QsvtReport {
    /// True when every subspace either fits at least the target slope or is
    /// error-free.
    pub fn all_pass(&self, min_slope: f64) -> bool {
        self.subspaces
            .iter()
            .all(|s| s.slope.map_or(true, |v| v >= min_slope))
    }
}

/// Verifies that a single recovery plan suppresses the error uniformly: a
/// per-subspace residual curve is fitted for every singular value.
pub fn qsvt_verify_uniform(
    seq: &PhaseSequence,
    recovery: &PhaseSequence,
    k: usize,
    spectrum: &SingularSpectrum,
    epsilons: &[f64],
) -> QsvtReport {
    let subspaces = spectrum
        .values()
        .par_iter()
        .map(|&a| {
            let theta = a.clamp(0.0, 1.0).acos();
            // A single-angle residual curve: grid size 1 at this theta.
            let curve = single_angle_curve(seq, recovery, theta, epsilons);
            let max_residual = curve.1.iter().copied().fold(0.0, f64::max);
            let slope = match crate::verify::fit_order_of(&curve.0, &curve.1) {
                Ok(s) => Some(s),
                Err(VerifyError::TooFewPoints(_)) => None,
            };
            SubspaceReport {
                a,
                theta,
                max_residual,
                slope,
            }
        })
        .collect();
    QsvtReport { k, subspaces }
}

fn single_angle_curve(
    seq: &PhaseSequence,
    recovery: &PhaseSequence,
    theta: f64,
    epsilons: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let composite = seq.concat(recovery);
    let ideal = crate::su2::success_prob(&qsp_eval(seq, theta, 0.0));
    let residuals: Vec<f64> = epsilons
        .iter()
        .map(|&eps| (crate::su2::success_prob(&qsp_eval(&composite, theta, eps)) - ideal).abs())
        .collect();
    (epsilons.to_vec(), residuals)
}
