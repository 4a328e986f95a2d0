//! Simulation and recovery of quantum signal processing (QSP) sequences under
//! multiplicative phase noise.
//!
//! Every Z-rotation phase of a QSP sequence is assumed to execute as
//! `phi * (1 + eps)` for one fixed, unknown `eps`. This crate provides:
//!
//! * exact evaluation of noisy and noiseless sequences as 2x2 unitaries ([`su2`]),
//! * exact power-series expansion of a noisy sequence in `eps`, with Pauli
//!   decomposition of the per-order error operators ([`series`]),
//! * synthesis of recovery sequences that cancel the X/Y Pauli error
//!   components to a requested order ([`synth`]),
//! * numerical verification: residual curves, suppression-order fits, error
//!   thresholds, and a finite-difference oracle ([`verify`]),
//! * the lift to singular-value transformation, where one recovery plan
//!   serves every singular-value subspace ([`qsvt`]).

pub mod qsvt;
pub mod rng;
pub mod series;
pub mod solver;
pub mod su2;
pub mod synth;
pub mod verify;

pub use su2::{qsp_eval, signal_w, success_prob, z_rot, PhaseSequence, Unitary2};
pub use series::{expand, extract_error_polys, pauli_error_decomp, EpsJet, ErrorPoly, PauliErrorLayer, TrigPoly};
pub use synth::{first_order_recovery, higher_order_recovery, synth_gadget, AtomKind, Gadget, PlanAtom, RecoveryPlan, SynthConfig, SynthError};
pub use verify::{fd_oracle, fit_order, residual_curve, threshold, ResidualCurve, ThresholdReport};
pub use qsvt::{qsvt_apply, qsvt_verify_uniform, QsvtReport, SingularSpectrum};
