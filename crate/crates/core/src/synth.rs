//! Recovery-sequence synthesis.
//!
//! The first-order unit is a gadget built around the symmetric core
//! `V = QSP(-a_{s-1}, ..., -a_0, pi/2, a_0, ..., a_{s-1})`. Telescoping
//! through the central pi/2 rotation gives `V = iZ` at zero noise for every
//! signal angle, so the counter-rotated composite
//! `e^{i d Z'} V e^{-2 i d Z'} V e^{i d Z'}` (with `Z' = (1+eps) Z`) equals
//! `-I` exactly at zero noise: appending it never moves the noiseless
//! success probability. Its first-order X/Y error contribution is
//! `2 sin(2 delta)` times a quarter-turn of the core's own components, which
//! is what the degree-reduction solve tunes.
//!
//! Stages beyond first order use conjugate-doubled atoms: conjugating by
//! noisy `e^{+-i pi/2 (1+eps) Z}` rotates the X/Y components of an error
//! layer by half a turn while leaving lower (diagonal) layers untouched, so
//! `D(pi/2) A D(-pi/2) A` cancels the X/Y part of A's lowest dirty order
//! structurally. Doubling `j-1` times yields an atom whose X/Y errors start
//! at order `j` with a free overall rotation and size parameters left for
//! the Newton solve.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::series::{expand, extract_error_polys, EpsJet, ErrorPoly, MatPoly, TrigPoly};
use crate::solver::{least_squares_newton, NewtonOpts};
use crate::su2::PhaseSequence;

/// Coefficients at or below this magnitude count as cancelled.
pub const COEFF_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    /// Random initializations per first-order gadget solve.
    pub multistarts: usize,
    /// Random initializations per higher-stage solve attempt.
    pub stage_multistarts: usize,
    /// Ansatz growth attempts per degree before giving up.
    pub max_attempts: usize,
    pub newton: NewtonOpts,
    /// Re-expand the full composite after synthesis and assert soundness.
    pub final_check: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            multistarts: 64,
            stage_multistarts: 24,
            max_attempts: 4,
            newton: NewtonOpts::default(),
            final_check: true,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Error)]
pub enum GadgetError {
    #[error("no multistart converged (best residual {best:.3e})")]
    NoConvergence { best: f64 },
    #[error("both leading coefficients at degree {degree} are below tolerance; skip this s")]
    DegenerateInput { degree: usize },
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthesis stalled at order {order}, degree {degree} (best residual {best:.3e}); partial plan achieves order {achieved}")]
    NoConvergence {
        order: usize,
        degree: usize,
        best: f64,
        achieved: usize,
        partial: RecoveryPlan,
    },
}

/// First-order degree-reduction unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Gadget {
    /// Target half-degree: cancels error-polynomial coefficients at `2s - 1`.
    pub s: usize,
    /// Angles of the symmetric core, indices `0..s`.
    pub alphas: Vec<f64>,
    /// Effective first-order scale; equals `2 sin(2 delta)`.
    pub beta: f64,
    /// Counter-rotation angle.
    pub delta: f64,
}

impl Gadget {
    /// Core phases `(-a_{s-1}, ..., -a_0, pi/2, a_0, ..., a_{s-1})`.
    pub fn v_phases(&self) -> Vec<f64> {
        let s = self.s;
        let mut v = Vec::with_capacity(2 * s + 1);
        for i in (0..s).rev() {
            v.push(-self.alphas[i]);
        }
        v.push(FRAC_PI_2);
        v.extend_from_slice(&self.alphas);
        v
    }

    /// Phase list of `e^{i d Z'} V e^{-2 i d Z'} V e^{i d Z'}` with adjacent
    /// pure rotations merged: `4s + 1` phases, exactly `4s` signal queries.
    pub fn flattened_phases(&self) -> Vec<f64> {
        let v = self.v_phases();
        let inner = &v[1..v.len() - 1];
        let last = v[v.len() - 1];
        let mut out = Vec::with_capacity(4 * self.s + 1);
        out.push(self.delta + v[0]);
        out.extend_from_slice(inner);
        out.push(last - 2.0 * self.delta + v[0]);
        out.extend_from_slice(inner);
        out.push(last + self.delta);
        out
    }

    pub fn w_count(&self) -> usize {
        4 * self.s
    }

    /// Max off-diagonal coefficient of the zero-noise gadget: the flattened
    /// gadget must act as a pure Z-phase when `eps = 0`.
    pub fn neutrality_defect(&self) -> f64 {
        let seq = PhaseSequence::new(self.flattened_phases()).expect("gadget phases are finite");
        EpsJet::qsp(&seq, 0).coeff(0).off_diag_max()
    }
}

/// Structural family of a stage atom. Both keep every order below the
/// atom's target order free of X/Y error for any parameter values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomKind {
    /// Gadget conjugate-doubled `order - 1` times: each doubling rotates the
    /// lowest dirty X/Y layer by half a turn against an identical copy.
    Doubled,
    /// Gadget pair with opposite counter-rotations (first-order X/Y cancels
    /// pairwise), then conjugate-doubled `order - 2` times. Reaches
    /// coefficient directions the doubled family is structurally blind to.
    FlipPair,
}

/// One unit of a recovery plan, wrapped in an outer rotation by `psi` that
/// steers the direction of its X/Y contribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanAtom {
    pub order: usize,
    pub kind: AtomKind,
    pub gadget: Gadget,
    pub psi: f64,
}

fn conj_double(p: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(2 * p.len() - 1);
    q.push(FRAC_PI_2 + p[0]);
    q.extend_from_slice(&p[1..]);
    *q.last_mut().unwrap() += -FRAC_PI_2 + p[0];
    q.extend_from_slice(&p[1..]);
    q
}

fn merge_phases(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    *a.last_mut().unwrap() += b[0];
    a.extend_from_slice(&b[1..]);
    a
}

/// Flattened phases of a stage atom.
pub fn atom_phases(kind: AtomKind, gadget: &Gadget, order: usize, psi: f64) -> Vec<f64> {
    let (mut p, doublings) = match kind {
        AtomKind::Doubled => (gadget.flattened_phases(), order - 1),
        AtomKind::FlipPair => {
            assert!(order >= 2, "flip pairs start at order 2");
            let flipped = Gadget {
                delta: -gadget.delta,
                ..gadget.clone()
            };
            (
                merge_phases(gadget.flattened_phases(), &flipped.flattened_phases()),
                order - 2,
            )
        }
    };
    for _ in 0..doublings {
        p = conj_double(&p);
    }
    p[0] += psi;
    *p.last_mut().unwrap() -= psi;
    p
}

impl PlanAtom {
    pub fn flattened_phases(&self) -> Vec<f64> {
        atom_phases(self.kind, &self.gadget, self.order, self.psi)
    }

    pub fn w_count(&self) -> usize {
        match self.kind {
            AtomKind::Doubled => self.gadget.w_count() << (self.order - 1),
            AtomKind::FlipPair => (2 * self.gadget.w_count()) << (self.order - 2),
        }
    }
}

/// Ordered recovery plan; flattening appends the atoms in application order
/// with merged adjacent phases.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryPlan {
    pub target_order: usize,
    pub achieved_order: usize,
    pub atoms: Vec<PlanAtom>,
    pub seed: u64,
}

impl RecoveryPlan {
    pub fn empty(target_order: usize, seed: u64) -> Self {
        Self {
            target_order,
            achieved_order: 0,
            atoms: Vec::new(),
            seed,
        }
    }

    /// Signal-query count of the flattened plan.
    pub fn w_len(&self) -> usize {
        self.atoms.iter().map(|a| a.w_count()).sum()
    }

    pub fn flatten(&self) -> PhaseSequence {
        if self.atoms.is_empty() {
            return PhaseSequence::empty();
        }
        let mut phases = self.atoms[0].flattened_phases();
        for atom in &self.atoms[1..] {
            let p = atom.flattened_phases();
            *phases.last_mut().unwrap() += p[0];
            phases.extend_from_slice(&p[1..]);
        }
        PhaseSequence::new(phases).expect("plan phases are finite")
    }
}

/// Zero-noise matrix of the core tail `W e^{i a_0 Z} ... W e^{i a_{s-1} Z}`.
fn tail_matrix(alphas: &[f64]) -> MatPoly {
    let mut phases = Vec::with_capacity(alphas.len() + 1);
    phases.push(0.0);
    phases.extend_from_slice(alphas);
    let seq = PhaseSequence::new(phases).expect("tail phases are finite");
    EpsJet::qsp(&seq, 0).coeff(0).clone()
}

/// First-order error polynomials `(x_V, y_V)` of the symmetric core: its
/// first-order error layer is `i (pi/2) A^dag Z A` with `A` the tail above.
fn core_polys(alphas: &[f64]) -> (ErrorPoly, ErrorPoly) {
    let a = tail_matrix(alphas);
    let z = MatPoly::constant([
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
    ]);
    let m = a.adjoint().mul(&z).mul(&a);
    let comps = m.pauli_components();
    let tol = 1e-9 * (1.0 + m.max_abs());
    let to_poly = |h: &TrigPoly| -> ErrorPoly {
        let g = h
            .scale(Complex64::new(FRAC_PI_2, 0.0))
            .div_sin(tol)
            .expect("core X/Y components are sin-divisible");
        ErrorPoly::from_even_trig(&g)
    };
    (to_poly(&comps[1]), to_poly(&comps[2]))
}

/// Unit error polynomials `(x_s, y_s)` of a gadget: the flattened gadget
/// contributes `beta * (x_s, y_s)` at first order with `beta = 2 sin(2 delta)`.
/// The counter-rotation turns the core's components by a quarter turn.
pub fn gadget_unit_polys(alphas: &[f64]) -> (ErrorPoly, ErrorPoly) {
    let (xv, yv) = core_polys(alphas);
    let mut xs = ErrorPoly::zero();
    xs.add_scaled(&yv, -1.0);
    (xs, xv)
}

fn finite(u: &[f64]) -> bool {
    u.iter().all(|v| v.is_finite())
}

struct StartResult {
    params: Vec<f64>,
    resid: f64,
    converged: bool,
}

/// Runs `count` Newton solves from seeded random starts (plus an optional
/// warm start) and picks, deterministically, the converged solution with the
/// smallest angle cost.
fn multistart<R, D, C>(
    residual: &R,
    draw: &D,
    cost: &C,
    warm: Option<&[f64]>,
    count: usize,
    seed: u64,
    tag: u64,
    opts: &NewtonOpts,
) -> Result<Vec<f64>, f64>
where
    R: Fn(&[f64]) -> Vec<f64> + Sync,
    D: Fn(&mut SplitMix64) -> Vec<f64> + Sync,
    C: Fn(&[f64]) -> f64,
{
    let starts: Vec<Vec<f64>> = (0..count)
        .map(|i| match (i, warm) {
            (0, Some(w)) => w.to_vec(),
            _ => {
                let mut rng = SplitMix64::derive(seed, tag.wrapping_mul(0x1000).wrapping_add(i as u64));
                draw(&mut rng)
            }
        })
        .collect();
    let results: Vec<StartResult> = starts
        .par_iter()
        .map(|x0| {
            let res = least_squares_newton(|u| residual(u), x0, opts);
            StartResult {
                params: res.x,
                resid: res.resid_inf,
                converged: res.converged,
            }
        })
        .collect();
    let mut best: Option<(f64, &StartResult)> = None;
    for r in results.iter().filter(|r| r.converged) {
        let c = cost(&r.params);
        if best.as_ref().map_or(true, |(bc, _)| c < *bc) {
            best = Some((c, r));
        }
    }
    match best {
        Some((_, r)) => Ok(r.params.clone()),
        None => Err(results.iter().map(|r| r.resid).fold(f64::INFINITY, f64::min)),
    }
}

/// Solves for a gadget cancelling the degree-`(2s-1)` leading coefficients of
/// the error polynomials `x, y`. Unknowns are the core angles, the scale
/// `beta`, and the counter-rotation `delta`; the realizability constraint
/// `beta = 2 sin(2 delta)` is one of the residual equations.
///
/// `fraction` scales the cancellation target; 1 aims at full cancellation.
fn synth_gadget_fraction(
    x: &ErrorPoly,
    y: &ErrorPoly,
    s: usize,
    fraction: f64,
    cfg: &SynthConfig,
    tag: u64,
) -> Result<Gadget, GadgetError> {
    assert!(s >= 1);
    let deg = 2 * s - 1;
    let (xc, yc) = (x.coeff(deg), y.coeff(deg));
    if xc.norm() < COEFF_TOL && yc.norm() < COEFF_TOL {
        return Err(GadgetError::DegenerateInput { degree: deg });
    }
    let (xc, yc) = (fraction * xc.re, fraction * yc.re);

    let residual = move |u: &[f64]| -> Vec<f64> {
        if !finite(u) {
            return vec![1e9; 3];
        }
        let (alphas, rest) = u.split_at(s);
        let (beta, delta) = (rest[0], rest[1]);
        let (xs, ys) = gadget_unit_polys(alphas);
        vec![
            xc + beta * xs.coeff(deg).re,
            yc + beta * ys.coeff(deg).re,
            beta - 2.0 * (2.0 * delta).sin(),
        ]
    };
    let draw = |rng: &mut SplitMix64| -> Vec<f64> {
        let mut u: Vec<f64> = (0..s).map(|_| rng.uniform(-PI, PI)).collect();
        u.push(rng.uniform(-2.0, 2.0));
        u.push(rng.uniform(-PI, PI));
        u
    };
    let cost = |u: &[f64]| -> f64 { u[..s].iter().map(|a| a.abs()).sum::<f64>() + u[s + 1].abs() };

    match multistart(&residual, &draw, &cost, None, cfg.multistarts, cfg.seed, tag, &cfg.newton) {
        Ok(u) => {
            let gadget = Gadget {
                s,
                alphas: u[..s].to_vec(),
                beta: u[s],
                delta: u[s + 1],
            };
            let defect = gadget.neutrality_defect();
            assert!(defect <= 1e-10, "gadget neutrality defect {defect:.3e}");
            Ok(gadget)
        }
        Err(best) => Err(GadgetError::NoConvergence { best }),
    }
}

/// Full-cancellation gadget solve; see [`synth_gadget_fraction`].
pub fn synth_gadget(
    x: &ErrorPoly,
    y: &ErrorPoly,
    s: usize,
    cfg: &SynthConfig,
    tag: u64,
) -> Result<Gadget, GadgetError> {
    synth_gadget_fraction(x, y, s, 1.0, cfg, tag)
}

/// Largest odd index above tolerance across both polynomials. Parity junk at
/// even indices would break every later step, so it is a hard failure.
fn odd_degree(x: &ErrorPoly, y: &ErrorPoly, tol: f64) -> Option<usize> {
    let deg = match (x.degree(tol), y.degree(tol)) {
        (None, None) => return None,
        (a, b) => a.unwrap_or(0).max(b.unwrap_or(0)),
    };
    assert!(
        deg % 2 == 1,
        "error polynomial has even-degree coefficient above tolerance at {deg}"
    );
    Some(deg)
}

/// First-order degree-reduction loop. Appends gadgets at descending `s`,
/// updating the running error polynomials with each gadget's closed-form
/// contribution, until both vanish within tolerance.
fn run_first_order_stage(
    plan: &mut RecoveryPlan,
    x: &mut ErrorPoly,
    y: &mut ErrorPoly,
    cfg: &SynthConfig,
) -> Result<(), SynthError> {
    let mut tag: u64 = 1 << 32;
    let mut fraction = 1.0;
    let mut stall = 0usize;
    while let Some(deg) = odd_degree(x, y, COEFF_TOL) {
        let s = (deg + 2) / 2;
        tag += 1;
        match synth_gadget_fraction(x, y, s, fraction, cfg, tag) {
            Ok(gadget) => {
                let (xs, ys) = gadget_unit_polys(&gadget.alphas);
                x.add_scaled(&xs, gadget.beta);
                y.add_scaled(&ys, gadget.beta);
                plan.atoms.push(PlanAtom {
                    order: 1,
                    kind: AtomKind::Doubled,
                    gadget,
                    psi: 0.0,
                });
                if fraction < 1.0 {
                    // A partial gadget leaves the degree in place by design.
                    stall += 1;
                    fraction = 1.0;
                } else {
                    stall = 0;
                }
            }
            Err(GadgetError::DegenerateInput { .. }) => {
                // Leading pair below tolerance; nothing to cancel at this s.
                unreachable!("degree scan guarantees a live leading coefficient");
            }
            Err(GadgetError::NoConvergence { best }) => {
                // Leading pair may exceed one gadget's reach; retry with a
                // half-cancellation target before giving up.
                if fraction > 0.49 && stall < 8 {
                    fraction = 0.5;
                    stall += 1;
                    continue;
                }
                return Err(SynthError::NoConvergence {
                    order: 1,
                    degree: deg,
                    best,
                    achieved: plan.achieved_order,
                    partial: plan.clone(),
                });
            }
        }
        if stall >= 12 {
            return Err(SynthError::NoConvergence {
                order: 1,
                degree: odd_degree(x, y, COEFF_TOL).unwrap_or(0),
                best: x.max_abs().max(y.max_abs()),
                achieved: plan.achieved_order,
                partial: plan.clone(),
            });
        }
    }
    plan.achieved_order = 1;
    Ok(())
}

/// Synthesizes the first-order recovery plan for `seq`.
pub fn first_order_recovery(
    seq: &PhaseSequence,
    cfg: &SynthConfig,
) -> Result<RecoveryPlan, SynthError> {
    let exp = expand(seq, 1);
    let (mut x, mut y) =
        extract_error_polys(&exp.layers[0]).expect("first-order layer is sin-divisible and real");
    let mut plan = RecoveryPlan::empty(1, cfg.seed);
    run_first_order_stage(&mut plan, &mut x, &mut y, cfg)?;
    if cfg.final_check {
        let defects = composite_xy_defects(seq, &plan.flatten(), 1);
        assert!(
            defects[0] <= 1e-8,
            "first-order soundness defect {:.3e}",
            defects[0]
        );
    }
    Ok(plan)
}

/// Max X/Y Pauli coefficient of the composite's error layers, orders `1..=k`.
pub fn composite_xy_defects(seq: &PhaseSequence, recovery: &PhaseSequence, k: usize) -> Vec<f64> {
    let composite = seq.concat(recovery);
    let exp = expand(&composite, k);
    exp.layers.iter().map(|l| l.xy_max()).collect()
}

/// Error polynomials of one stage atom at `order`, plus the worst X/Y
/// coefficient over the lower layers (which the structure keeps at zero).
fn atom_error_polys(
    kind: AtomKind,
    gadget: &Gadget,
    order: usize,
    psi: f64,
) -> Option<(ErrorPoly, ErrorPoly, f64)> {
    let phases = atom_phases(kind, gadget, order, psi);
    let seq = PhaseSequence::new(phases).ok()?;
    let exp = expand(&seq, order);
    let lower = exp.layers[..order - 1]
        .iter()
        .map(|l| l.xy_max())
        .fold(0.0, f64::max);
    let layer = &exp.layers[order - 1];
    let (dx, dy) = extract_error_polys(layer).ok()?;
    Some((dx, dy, lower))
}

/// Chain member slot: family plus core size.
type Member = (AtomKind, usize);

struct StageCtx<'a> {
    cfg: &'a SynthConfig,
    /// Measured top degree of an atom's order-`j` polynomials, by `(kind, j, s)`.
    top_cache: HashMap<(AtomKind, usize, usize), usize>,
}

impl StageCtx<'_> {
    /// Top degree an atom of size `s` reaches at `order`, measured on probe
    /// parameters (structure, not chance, sets the support).
    fn atom_top(&mut self, kind: AtomKind, order: usize, s: usize) -> usize {
        if let Some(&t) = self.top_cache.get(&(kind, order, s)) {
            return t;
        }
        let probes: [(f64, f64, f64); 2] = [(0.83, 0.73, 0.41), (-0.37, -1.13, 1.31)];
        let mut top = 0usize;
        for (pa, pd, pp) in probes {
            let alphas: Vec<f64> = (0..s).map(|i| pa + 0.29 * i as f64).collect();
            let gadget = Gadget {
                s,
                alphas,
                beta: 2.0 * (2.0 * pd).sin(),
                delta: pd,
            };
            if let Some((dx, dy, _)) = atom_error_polys(kind, &gadget, order, pp) {
                let scale = dx.max_abs().max(dy.max_abs()).max(1.0);
                let t = dx
                    .degree(1e-9 * scale)
                    .unwrap_or(0)
                    .max(dy.degree(1e-9 * scale).unwrap_or(0));
                top = top.max(t);
            }
        }
        self.top_cache.insert((kind, order, s), top);
        top
    }

    /// Smallest atom size whose order-`j` polynomials reach `deg`.
    fn base_size(&mut self, kind: AtomKind, order: usize, deg: usize) -> usize {
        let mut s = 1;
        while self.atom_top(kind, order, s) < deg {
            s += 1;
            if s > 4 * deg + 8 {
                break;
            }
        }
        s
    }
}

/// One peel step at `order >= 2`: append a chain of atoms cancelling every
/// coefficient at or above `deg` of the stage error polynomials.
///
/// Single atoms at small sizes carry locked coefficient patterns, so the
/// attempt ladder mixes the two families and grows the chain until the
/// targets decouple.
#[allow(clippy::too_many_arguments)]
fn peel_stage_degree(
    ctx: &mut StageCtx,
    plan: &mut RecoveryPlan,
    xj: &mut ErrorPoly,
    yj: &mut ErrorPoly,
    order: usize,
    deg: usize,
    warm: &mut HashMap<Vec<Member>, Vec<f64>>,
    tag_base: u64,
) -> Result<(), f64> {
    let cfg = ctx.cfg;
    let sf = ctx.base_size(AtomKind::FlipPair, order, deg);
    let sd = ctx.base_size(AtomKind::Doubled, order, deg);
    use AtomKind::*;
    let ladder: Vec<Vec<Member>> = vec![
        vec![(FlipPair, sf)],
        vec![(FlipPair, sf), (Doubled, sd)],
        vec![(FlipPair, sf), (Doubled, sd), (FlipPair, 1), (Doubled, 1)],
        vec![
            (FlipPair, sf + 1),
            (Doubled, sd + 1),
            (FlipPair, sf),
            (Doubled, sd),
            (FlipPair, 1),
            (Doubled, 1),
        ],
    ];
    let mut best_overall = f64::INFINITY;

    for (attempt, members) in ladder.iter().take(cfg.max_attempts).enumerate() {
        let top_cap = members
            .iter()
            .map(|&(kind, s)| ctx.atom_top(kind, order, s))
            .max()
            .unwrap_or(deg)
            .max(deg);
        // Cancel every odd-degree coefficient from the chain's reach down to
        // the current target degree.
        let kill: Vec<usize> = (0..=top_cap)
            .rev()
            .filter(|i| i % 2 == 1 && *i >= deg)
            .collect();
        let members = members.clone();
        let total_dim: usize = members.iter().map(|&(_, s)| s + 2).sum();

        let xj_s = xj.clone();
        let yj_s = yj.clone();
        let chain_polys = {
            let members = members.clone();
            move |u: &[f64]| -> Option<(ErrorPoly, ErrorPoly, f64)> {
                if !finite(u) {
                    return None;
                }
                let mut dx = ErrorPoly::zero();
                let mut dy = ErrorPoly::zero();
                let mut lower: f64 = 0.0;
                let mut off = 0usize;
                for &(kind, s) in &members {
                    let alphas = u[off..off + s].to_vec();
                    let delta = u[off + s];
                    let psi = u[off + s + 1];
                    off += s + 2;
                    let gadget = Gadget {
                        s,
                        alphas,
                        beta: 2.0 * (2.0 * delta).sin(),
                        delta,
                    };
                    let (ax, ay, lo) = atom_error_polys(kind, &gadget, order, psi)?;
                    dx.add_scaled(&ax, 1.0);
                    dy.add_scaled(&ay, 1.0);
                    lower = lower.max(lo);
                }
                Some((dx, dy, lower))
            }
        };

        let kill_r = kill.clone();
        let residual = {
            let chain_polys = chain_polys.clone();
            move |u: &[f64]| -> Vec<f64> {
                match chain_polys(u) {
                    Some((dx, dy, _)) => kill_r
                        .iter()
                        .flat_map(|&i| {
                            [
                                xj_s.coeff(i).re + dx.coeff(i).re,
                                yj_s.coeff(i).re + dy.coeff(i).re,
                            ]
                        })
                        .collect(),
                    None => vec![1e9; 2 * kill_r.len()],
                }
            }
        };
        let members_d = members.clone();
        let draw = move |rng: &mut SplitMix64| -> Vec<f64> {
            let mut u = Vec::new();
            for &(_, s) in &members_d {
                for _ in 0..s {
                    u.push(rng.uniform(-PI, PI));
                }
                u.push(rng.uniform(-PI, PI));
                u.push(rng.uniform(-PI, PI));
            }
            u
        };
        let cost = |u: &[f64]| -> f64 { u.iter().map(|v| v.abs()).sum() };

        if std::env::var_os("QSP_SYNTH_DEBUG").is_some() {
            let tgt: Vec<String> = kill
                .iter()
                .map(|&i| format!("{}:{:.2e}/{:.2e}", i, xj.coeff(i).re, yj.coeff(i).re))
                .collect();
            eprintln!("[peel] order={order} deg={deg} attempt={attempt} members={members:?} targets={tgt:?}");
        }
        let warm_start = warm.get(&members).filter(|w| w.len() == total_dim).cloned();
        let tag = tag_base.wrapping_mul(8).wrapping_add(attempt as u64);
        match multistart(
            &residual,
            &draw,
            &cost,
            warm_start.as_deref(),
            cfg.stage_multistarts,
            cfg.seed,
            tag,
            &cfg.newton,
        ) {
            Ok(u) => {
                let (dx, dy, lower) = chain_polys(&u).expect("solution parameters are finite");
                assert!(
                    lower <= 1e-8,
                    "stage atom leaked X/Y error {lower:.3e} below order {order}"
                );
                xj.add_scaled(&dx, 1.0);
                yj.add_scaled(&dy, 1.0);
                let mut off = 0;
                for &(kind, s) in &members {
                    let gadget = Gadget {
                        s,
                        alphas: u[off..off + s].to_vec(),
                        beta: 2.0 * (2.0 * u[off + s]).sin(),
                        delta: u[off + s],
                    };
                    let atom = PlanAtom {
                        order,
                        kind,
                        gadget,
                        psi: u[off + s + 1],
                    };
                    off += s + 2;
                    // Drop members the solver zeroed out entirely.
                    let (ax, ay, _) = atom_error_polys(kind, &atom.gadget, order, atom.psi)
                        .expect("solution parameters are finite");
                    if ax.max_abs().max(ay.max_abs()) > 1e-12 {
                        plan.atoms.push(atom);
                    }
                }
                warm.insert(members, u);
                return Ok(());
            }
            Err(best) => {
                if std::env::var_os("QSP_SYNTH_DEBUG").is_some() {
                    eprintln!("[peel]   attempt {attempt} failed, best {best:.3e}");
                }
                best_overall = best_overall.min(best);
            }
        }
    }
    Err(best_overall)
}

/// Synthesizes an order-`k` recovery plan, iterating order by order: stage
/// `j` cancels the order-`j` X/Y components of the running composite while
/// the atoms' structure keeps every lower order clean.
pub fn higher_order_recovery(
    seq: &PhaseSequence,
    k: usize,
    cfg: &SynthConfig,
) -> Result<RecoveryPlan, SynthError> {
    assert!(k >= 1, "recovery order must be at least 1");
    let mut plan = first_order_recovery(seq, &SynthConfig { final_check: false, ..cfg.clone() })?;
    plan.target_order = k;

    for order in 2..=k {
        let composite = seq.concat(&plan.flatten());
        let exp = expand(&composite, order);
        for layer in &exp.layers[..order - 1] {
            assert!(
                layer.xy_max() <= 1e-8,
                "order-{} X/Y error resurfaced at {:.3e}",
                layer.order,
                layer.xy_max()
            );
        }
        let layer = &exp.layers[order - 1];
        let scale = 1.0 + layer.xy_max();
        let (mut xj, mut yj) =
            extract_error_polys(layer).expect("stage layer is sin-divisible");
        assert!(
            xj.max_imag().max(yj.max_imag()) <= 1e-8 * scale,
            "stage error polynomials are not real"
        );

        let mut ctx = StageCtx {
            cfg,
            top_cache: HashMap::new(),
        };
        let mut warm: HashMap<Vec<Member>, Vec<f64>> = HashMap::new();
        let mut peel = 0usize;
        while let Some(deg) = odd_degree(&xj, &yj, COEFF_TOL) {
            peel += 1;
            if peel > deg + 64 {
                return Err(SynthError::NoConvergence {
                    order,
                    degree: deg,
                    best: xj.max_abs().max(yj.max_abs()),
                    achieved: plan.achieved_order,
                    partial: plan.clone(),
                });
            }
            let tag_base = ((order as u64) << 40) | (peel as u64);
            if let Err(best) = peel_stage_degree(
                &mut ctx, &mut plan, &mut xj, &mut yj, order, deg, &mut warm, tag_base,
            ) {
                return Err(SynthError::NoConvergence {
                    order,
                    degree: deg,
                    best,
                    achieved: plan.achieved_order,
                    partial: plan.clone(),
                });
            }
        }
        plan.achieved_order = order;
    }

    if cfg.final_check {
        let defects = composite_xy_defects(seq, &plan.flatten(), k);
        for (i, &d) in defects.iter().enumerate() {
            assert!(
                d <= 1e-8,
                "order-{} soundness defect {:.3e} after synthesis",
                i + 1,
                d
            );
        }
    }
    Ok(plan)
}
