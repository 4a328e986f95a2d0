//! Exact symbolic machinery: trigonometric-polynomial arithmetic and the
//! truncated power-series expansion of a noisy QSP sequence in the noise
//! parameter.
//!
//! Everything is carried in the Laurent/Fourier basis `e^{i n theta}`:
//! products of sequence factors are exact coefficient convolutions.
//! Conversion to polynomials in `cos(theta)` happens only at the error
//! polynomial extraction boundary.

use num_complex::Complex64;
use thiserror::Error;

use crate::su2::{PhaseSequence, Unitary2};

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("component is not odd in theta (defect {defect:.3e} exceeds {tol:.1e})")]
    NotOdd { defect: f64, tol: f64 },
    #[error("component is not divisible by sin(theta) (residual {residual:.3e} exceeds {tol:.1e})")]
    NotDivisible { residual: f64, tol: f64 },
    #[error("error polynomial at order {order} has imaginary part {defect:.3e}, expected real within {tol:.1e}")]
    NotReal { order: usize, defect: f64, tol: f64 },
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Finite Laurent series `sum_n c_n e^{i n theta}` for `n` in `[-half, half]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    half: usize,
    c: Vec<Complex64>,
}

impl TrigPoly {
    pub fn zeros(half: usize) -> Self {
        Self {
            half,
            c: vec![ZERO; 2 * half + 1],
        }
    }

    pub fn zero() -> Self {
        Self::zeros(0)
    }

    pub fn constant(z: Complex64) -> Self {
        Self { half: 0, c: vec![z] }
    }

    /// Single mode `z * e^{i n theta}`.
    pub fn mode(n: i64, z: Complex64) -> Self {
        let half = n.unsigned_abs() as usize;
        let mut p = Self::zeros(half);
        p.set(n, z);
        p
    }

    /// `cos(m theta)` with real amplitude.
    pub fn cosine(m: u32, amp: f64) -> Self {
        if m == 0 {
            return Self::constant(Complex64::new(amp, 0.0));
        }
        let mut p = Self::zeros(m as usize);
        p.set(m as i64, Complex64::new(amp / 2.0, 0.0));
        p.set(-(m as i64), Complex64::new(amp / 2.0, 0.0));
        p
    }

    /// `sin(m theta)` with real amplitude.
    pub fn sine(m: u32, amp: f64) -> Self {
        let mut p = Self::zeros(m as usize);
        p.set(m as i64, Complex64::new(0.0, -amp / 2.0));
        p.set(-(m as i64), Complex64::new(0.0, amp / 2.0));
        p
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        let h = self.half as i64;
        if n < -h || n > h {
            ZERO
        } else {
            self.c[(n + h) as usize]
        }
    }

    pub fn set(&mut self, n: i64, z: Complex64) {
        let h = self.half as i64;
        assert!(n >= -h && n <= h, "mode {n} out of range +-{h}");
        self.c[(n + h) as usize] = z;
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        // Horner in z = e^{i theta}: p = z^{-half} * sum c_k z^k.
        let z = Complex64::from_polar(1.0, theta);
        let mut acc = ZERO;
        for &ck in self.c.iter().rev() {
            acc = acc * z + ck;
        }
        acc * Complex64::from_polar(1.0, -(self.half as f64) * theta)
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = TrigPoly::zeros(self.half.max(other.half));
        let h = out.half as i64;
        for n in -h..=h {
            out.set(n, self.coeff(n) + other.coeff(n));
        }
        out
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, z: Complex64) -> TrigPoly {
        TrigPoly {
            half: self.half,
            c: self.c.iter().map(|&ck| ck * z).collect(),
        }
    }

    /// Coefficient convolution; degree bound is the sum of the factors'.
    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = TrigPoly::zeros(self.half + other.half);
        for (i, &ai) in self.c.iter().enumerate() {
            if ai == ZERO {
                continue;
            }
            for (j, &bj) in other.c.iter().enumerate() {
                if bj == ZERO {
                    continue;
                }
                out.c[i + j] += ai * bj;
            }
        }
        out
    }

    /// Multiplication by `cos(theta)`: pure half-shifts, O(n).
    pub fn mul_cos(&self) -> TrigPoly {
        let mut out = TrigPoly::zeros(self.half + 1);
        for (i, &ck) in self.c.iter().enumerate() {
            let v = ck * 0.5;
            out.c[i] += v;
            out.c[i + 2] += v;
        }
        out
    }

    /// Multiplication by `i sin(theta)`: pure half-shifts, O(n).
    pub fn mul_i_sin(&self) -> TrigPoly {
        let mut out = TrigPoly::zeros(self.half + 1);
        for (i, &ck) in self.c.iter().enumerate() {
            let v = ck * 0.5;
            out.c[i] -= v;
            out.c[i + 2] += v;
        }
        out
    }

    /// Pointwise complex conjugate of the function: `c'_n = conj(c_{-n})`.
    pub fn conj_reflect(&self) -> TrigPoly {
        let mut out = TrigPoly::zeros(self.half);
        let h = self.half as i64;
        for n in -h..=h {
            out.set(n, self.coeff(-n).conj());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |n| with |c_n| above `tol`, if any.
    pub fn effective_half(&self, tol: f64) -> Option<usize> {
        let h = self.half as i64;
        for n in (0..=h).rev() {
            if self.coeff(n).norm() > tol || self.coeff(-n).norm() > tol {
                return Some(n as usize);
            }
        }
        None
    }

    /// `c_{-n} = conj(c_n)` within `tol`: the function is real-valued.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        self.realness_defect() <= tol
    }

    pub fn realness_defect(&self) -> f64 {
        let h = self.half as i64;
        (0..=h)
            .map(|n| (self.coeff(-n) - self.coeff(n).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn oddness_defect(&self) -> f64 {
        let h = self.half as i64;
        (0..=h)
            .map(|n| (self.coeff(-n) + self.coeff(n)).norm())
            .fold(0.0, f64::max)
    }

    pub fn evenness_defect(&self) -> f64 {
        let h = self.half as i64;
        (1..=h)
            .map(|n| (self.coeff(-n) - self.coeff(n)).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_odd(&self, tol: f64) -> bool {
        self.oddness_defect() <= tol
    }

    pub fn is_even(&self, tol: f64) -> bool {
        self.evenness_defect() <= tol
    }

    /// Exact division by `sin(theta)` via the coefficient recurrence
    /// `a_{m} = 2i c_{m+1} + a_{m+2}`, marching from the top mode down.
    /// The quotient is validated by re-multiplication; a residual above `tol`
    /// means the input was not an exact multiple of `sin(theta)`.
    pub fn div_sin(&self, tol: f64) -> Result<TrigPoly, SeriesError> {
        if self.half == 0 {
            let residual = self.max_abs();
            return if residual <= tol {
                Ok(TrigPoly::zero())
            } else {
                Err(SeriesError::NotDivisible { residual, tol })
            };
        }
        let n = self.half as i64;
        let mut g = TrigPoly::zeros(self.half - 1);
        let two_i = Complex64::new(0.0, 2.0);
        for m in (-(n - 1)..=(n - 1)).rev() {
            let above = if m + 2 > n - 1 { ZERO } else { g.coeff(m + 2) };
            g.set(m, two_i * self.coeff(m + 1) + above);
        }
        // sin * g = -i * (i sin * g)
        let recon = g.mul_i_sin().scale(Complex64::new(0.0, -1.0));
        let residual = recon.sub(self).max_abs();
        if residual <= tol {
            Ok(g)
        } else {
            Err(SeriesError::NotDivisible { residual, tol })
        }
    }
}

/// 2x2 matrix with [`TrigPoly`] entries.
#[derive(Clone, Debug)]
pub struct MatPoly {
    pub e: [[TrigPoly; 2]; 2],
}

impl MatPoly {
    pub fn zero() -> Self {
        Self {
            e: [
                [TrigPoly::zero(), TrigPoly::zero()],
                [TrigPoly::zero(), TrigPoly::zero()],
            ],
        }
    }

    pub fn identity() -> Self {
        Self::constant([[Complex64::new(1.0, 0.0), ZERO], [ZERO, Complex64::new(1.0, 0.0)]])
    }

    pub fn constant(m: [[Complex64; 2]; 2]) -> Self {
        Self {
            e: [
                [TrigPoly::constant(m[0][0]), TrigPoly::constant(m[0][1])],
                [TrigPoly::constant(m[1][0]), TrigPoly::constant(m[1][1])],
            ],
        }
    }

    pub fn mul(&self, other: &MatPoly) -> MatPoly {
        let mut out = MatPoly::zero();
        for r in 0..2 {
            for c in 0..2 {
                out.e[r][c] = self.e[r][0]
                    .mul(&other.e[0][c])
                    .add(&self.e[r][1].mul(&other.e[1][c]));
            }
        }
        out
    }

    pub fn add(&self, other: &MatPoly) -> MatPoly {
        let mut out = MatPoly::zero();
        for r in 0..2 {
            for c in 0..2 {
                out.e[r][c] = self.e[r][c].add(&other.e[r][c]);
            }
        }
        out
    }

    pub fn scale(&self, z: Complex64) -> MatPoly {
        let mut out = self.clone();
        for r in 0..2 {
            for c in 0..2 {
                out.e[r][c] = out.e[r][c].scale(z);
            }
        }
        out
    }

    pub fn adjoint(&self) -> MatPoly {
        MatPoly {
            e: [
                [self.e[0][0].conj_reflect(), self.e[1][0].conj_reflect()],
                [self.e[0][1].conj_reflect(), self.e[1][1].conj_reflect()],
            ],
        }
    }

    pub fn eval(&self, theta: f64) -> Unitary2 {
        Unitary2::new([
            [self.e[0][0].eval(theta), self.e[0][1].eval(theta)],
            [self.e[1][0].eval(theta), self.e[1][1].eval(theta)],
        ])
    }

    pub fn max_abs(&self) -> f64 {
        self.e
            .iter()
            .flatten()
            .map(|p| p.max_abs())
            .fold(0.0, f64::max)
    }

    pub fn off_diag_max(&self) -> f64 {
        self.e[0][1].max_abs().max(self.e[1][0].max_abs())
    }

    /// Components in the Pauli basis: `M = h_I I + h_X X + h_Y Y + h_Z Z`,
    /// i.e. `h_P = tr(P M) / 2`.
    pub fn pauli_components(&self) -> [TrigPoly; 4] {
        let half = Complex64::new(0.5, 0.0);
        let half_i = Complex64::new(0.0, 0.5);
        [
            self.e[0][0].add(&self.e[1][1]).scale(half),
            self.e[0][1].add(&self.e[1][0]).scale(half),
            self.e[0][1].sub(&self.e[1][0]).scale(half_i),
            self.e[0][0].sub(&self.e[1][1]).scale(half),
        ]
    }
}

/// Truncated power series in the noise parameter whose coefficients are
/// matrices of trigonometric polynomials: `sum_k eps^k J_k(theta)`.
#[derive(Clone, Debug)]
pub struct EpsJet {
    coeffs: Vec<MatPoly>,
}

impl EpsJet {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> &MatPoly {
        &self.coeffs[k]
    }

    /// Jet of a single noisy rotation `e^{i phi (1 + eps) Z}`: the factor
    /// `e^{i phi Z}` times the entrywise exponential series in `eps`.
    pub fn zrot(phi: f64, order: usize) -> Self {
        let mut coeffs = Vec::with_capacity(order + 1);
        let base = [Complex64::from_polar(1.0, phi), Complex64::from_polar(1.0, -phi)];
        let gen = [Complex64::new(0.0, phi), Complex64::new(0.0, -phi)];
        let mut term = [base[0], base[1]];
        for k in 0..=order {
            if k > 0 {
                term[0] = term[0] * gen[0] / k as f64;
                term[1] = term[1] * gen[1] / k as f64;
            }
            coeffs.push(MatPoly::constant([[term[0], ZERO], [ZERO, term[1]]]));
        }
        Self { coeffs }
    }

    /// Exact truncated expansion of a noisy QSP sequence.
    pub fn qsp(seq: &PhaseSequence, order: usize) -> Self {
        let phases = seq.phases();
        let mut jet = Self::zrot(phases[0], order);
        for &phi in &phases[1..] {
            jet.apply_w();
            jet.apply_zrot(phi);
        }
        jet
    }

    /// Right-multiplies every coefficient by the (noiseless) signal operator.
    fn apply_w(&mut self) {
        for m in &mut self.coeffs {
            for r in 0..2 {
                let p = &m.e[r][0];
                let q = &m.e[r][1];
                let new0 = p.mul_cos().add(&q.mul_i_sin());
                let new1 = p.mul_i_sin().add(&q.mul_cos());
                m.e[r][0] = new0;
                m.e[r][1] = new1;
            }
        }
    }

    /// Right-multiplies by the jet of a noisy Z-rotation. The rotation's
    /// coefficients are diagonal constants, so this is a column scaling.
    fn apply_zrot(&mut self, phi: f64) {
        let order = self.order();
        let mut diag = Vec::with_capacity(order + 1);
        let mut term = [Complex64::from_polar(1.0, phi), Complex64::from_polar(1.0, -phi)];
        let gen = [Complex64::new(0.0, phi), Complex64::new(0.0, -phi)];
        for k in 0..=order {
            if k > 0 {
                term[0] = term[0] * gen[0] / k as f64;
                term[1] = term[1] * gen[1] / k as f64;
            }
            diag.push(term);
        }
        let mut out: Vec<MatPoly> = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut acc = MatPoly::zero();
            for l in 0..=k {
                let src = &self.coeffs[k - l];
                let d = diag[l];
                for r in 0..2 {
                    acc.e[r][0] = acc.e[r][0].add(&src.e[r][0].scale(d[0]));
                    acc.e[r][1] = acc.e[r][1].add(&src.e[r][1].scale(d[1]));
                }
            }
            out.push(acc);
        }
        self.coeffs = out;
    }

    /// Truncated product of two jets.
    pub fn mul(&self, other: &EpsJet) -> EpsJet {
        let order = self.order().min(other.order());
        let mut coeffs = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut acc = MatPoly::zero();
            for l in 0..=k {
                acc = acc.add(&self.coeffs[l].mul(&other.coeffs[k - l]));
            }
            coeffs.push(acc);
        }
        EpsJet { coeffs }
    }

    pub fn adjoint(&self) -> EpsJet {
        EpsJet {
            coeffs: self.coeffs.iter().map(|m| m.adjoint()).collect(),
        }
    }

    /// Conjugation by a noisy rotation: `e^{i psi (1+eps) Z} J e^{-i psi (1+eps) Z}`.
    pub fn conj_z_rot(&self, psi: f64) -> EpsJet {
        let left = EpsJet::zrot(psi, self.order());
        let right = EpsJet::zrot(-psi, self.order());
        left.mul(self).mul(&right)
    }

    /// Truncated evaluation at `(theta, eps)`; unitary only up to the
    /// truncation error.
    pub fn eval(&self, theta: f64, eps: f64) -> Unitary2 {
        let mut acc = [[ZERO; 2]; 2];
        let mut pow = 1.0;
        for m in &self.coeffs {
            let v = m.eval(theta);
            for r in 0..2 {
                for c in 0..2 {
                    acc[r][c] += v.m[r][c] * pow;
                }
            }
            pow *= eps;
        }
        Unitary2::new(acc)
    }

    /// Max coefficient magnitude of `(J^dag J - I)_k` over `k <= order`.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.adjoint().mul(self);
        let mut worst: f64 = 0.0;
        for (k, m) in prod.coeffs.iter().enumerate() {
            let target = if k == 0 { MatPoly::identity() } else { MatPoly::zero() };
            worst = worst.max(m.add(&target.scale(Complex64::new(-1.0, 0.0))).max_abs());
        }
        worst
    }
}

/// Pauli components of the `eps^k` coefficient of `U_0^dag U_eps`, stored in
/// the order `[h_I, h_X, h_Y, h_Z]`.
#[derive(Clone, Debug)]
pub struct PauliErrorLayer {
    pub order: usize,
    pub h: [TrigPoly; 4],
}

impl PauliErrorLayer {
    pub fn h_x(&self) -> &TrigPoly {
        &self.h[1]
    }

    pub fn h_y(&self) -> &TrigPoly {
        &self.h[2]
    }

    pub fn h_z(&self) -> &TrigPoly {
        &self.h[3]
    }

    /// Largest X/Y coefficient magnitude; zero means the layer cannot shift
    /// the success probability at this order.
    pub fn xy_max(&self) -> f64 {
        self.h[1].max_abs().max(self.h[2].max_abs())
    }
}

/// Per-order Pauli decomposition of `U_0^dag U_eps - I` for orders `1..=K`.
pub fn pauli_error_decomp(jet: &EpsJet) -> Vec<PauliErrorLayer> {
    let u0_dag = jet.coeff(0).adjoint();
    (1..=jet.order())
        .map(|k| {
            let ek = u0_dag.mul(jet.coeff(k));
            PauliErrorLayer {
                order: k,
                h: ek.pauli_components(),
            }
        })
        .collect()
}

/// Polynomial in `cos(theta)` held as Chebyshev-T coefficients: the value is
/// `sum_m t_m T_m(cos theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorPoly {
    t: Vec<Complex64>,
}

impl ErrorPoly {
    pub fn zero() -> Self {
        Self { t: vec![] }
    }

    pub fn from_coeffs(t: Vec<Complex64>) -> Self {
        Self { t }
    }

    /// Builds from an even real trig polynomial `g(theta) = x(cos theta)`:
    /// `t_0 = g_0`, `t_m = g_m + g_{-m}`.
    pub fn from_even_trig(g: &TrigPoly) -> Self {
        let h = g.half() as i64;
        let mut t = vec![ZERO; h as usize + 1];
        t[0] = g.coeff(0);
        for m in 1..=h {
            t[m as usize] = g.coeff(m) + g.coeff(-m);
        }
        Self { t }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.t
    }

    pub fn coeff(&self, m: usize) -> Complex64 {
        self.t.get(m).copied().unwrap_or(ZERO)
    }

    /// Highest index with |t_m| above `tol`.
    pub fn degree(&self, tol: f64) -> Option<usize> {
        self.t.iter().rposition(|z| z.norm() > tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.t.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.t.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Largest even-index coefficient magnitude; small values mean the
    /// polynomial is odd.
    pub fn even_part_max(&self) -> f64 {
        self.t
            .iter()
            .step_by(2)
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Clenshaw evaluation at `x = cos(theta)`.
    pub fn eval(&self, x: f64) -> Complex64 {
        let mut b1 = ZERO;
        let mut b2 = ZERO;
        for &tk in self.t.iter().skip(1).rev() {
            let next = tk + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = next;
        }
        self.coeff(0) + x * b1 - b2
    }

    pub fn add_scaled(&mut self, other: &ErrorPoly, factor: f64) {
        if other.t.len() > self.t.len() {
            self.t.resize(other.t.len(), ZERO);
        }
        for (dst, src) in self.t.iter_mut().zip(other.t.iter()) {
            *dst += src * factor;
        }
    }
}

const EXTRACT_TOL: f64 = 1e-10;

/// Extracts the error polynomials `x, y` with `-i h_X = x(cos theta) sin(theta)`
/// and `-i h_Y = y(cos theta) sin(theta)`, by exact coefficient division.
///
/// The `-i` normalization makes the first-order polynomials real: `-i E_1` is
/// Hermitian, which is asserted here as a hard failure at order 1.
pub fn extract_error_polys(layer: &PauliErrorLayer) -> Result<(ErrorPoly, ErrorPoly), SeriesError> {
    let minus_i = Complex64::new(0.0, -1.0);
    let extract = |h: &TrigPoly| -> Result<ErrorPoly, SeriesError> {
        let defect = h.oddness_defect();
        if defect > EXTRACT_TOL {
            return Err(SeriesError::NotOdd {
                defect,
                tol: EXTRACT_TOL,
            });
        }
        let g = h.scale(minus_i).div_sin(EXTRACT_TOL)?;
        Ok(ErrorPoly::from_even_trig(&g))
    };
    let x = extract(layer.h_x())?;
    let y = extract(layer.h_y())?;
    if layer.order == 1 {
        let defect = x.max_imag().max(y.max_imag());
        if defect > EXTRACT_TOL {
            return Err(SeriesError::NotReal {
                order: 1,
                defect,
                tol: EXTRACT_TOL,
            });
        }
    }
    Ok((x, y))
}

/// Jet plus its per-order Pauli error layers.
pub struct Expansion {
    pub jet: EpsJet,
    pub layers: Vec<PauliErrorLayer>,
}

/// Expands a sequence to the given order and decomposes every layer.
pub fn expand(seq: &PhaseSequence, order: usize) -> Expansion {
    let jet = EpsJet::qsp(seq, order);
    let layers = pauli_error_decomp(&jet);
    Expansion { jet, layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::su2::qsp_eval;
    use std::f64::consts::PI;

    #[test]
    fn trig_mul_product_to_sum() {
        let cos = TrigPoly::cosine(1, 1.0);
        let prod = cos.mul(&cos);
        let expect = TrigPoly::constant(Complex64::new(0.5, 0.0)).add(&TrigPoly::cosine(2, 0.5));
        assert!(prod.sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn trig_mul_identity_element() {
        let sin = TrigPoly::sine(1, 1.0);
        let one = TrigPoly::constant(Complex64::new(1.0, 0.0));
        assert!(sin.mul(&one).sub(&sin).max_abs() < 1e-15);
    }

    #[test]
    fn trig_mul_cos_sin() {
        let prod = TrigPoly::cosine(1, 1.0).mul(&TrigPoly::sine(1, 1.0));
        let expect = TrigPoly::sine(2, 0.5);
        assert!(prod.sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn mul_matches_shift_helpers() {
        let mut rng = SplitMix64::new(3);
        let mut p = TrigPoly::zeros(4);
        for n in -4..=4 {
            p.set(n, Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)));
        }
        let cos = TrigPoly::cosine(1, 1.0);
        assert!(p.mul(&cos).sub(&p.mul_cos()).max_abs() < 1e-15);
        let isin = TrigPoly::sine(1, 1.0).scale(Complex64::new(0.0, 1.0));
        assert!(p.mul(&isin).sub(&p.mul_i_sin()).max_abs() < 1e-15);
    }

    #[test]
    fn eval_homomorphism() {
        let mut rng = SplitMix64::new(8);
        let mut p = TrigPoly::zeros(3);
        let mut q = TrigPoly::zeros(5);
        for n in -3..=3 {
            p.set(n, Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)));
        }
        for n in -5..=5 {
            q.set(n, Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)));
        }
        for i in 0..16 {
            let theta = i as f64 * 0.41;
            let lhs = p.mul(&q).eval(theta);
            let rhs = p.eval(theta) * q.eval(theta);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn div_sin_exact_cases() {
        // sin(2 theta) / sin(theta) = 2 cos(theta)
        let g = TrigPoly::sine(2, 1.0).div_sin(1e-12).unwrap();
        assert!(g.sub(&TrigPoly::cosine(1, 2.0)).max_abs() < 1e-14);
        // 0 / sin = 0
        let z = TrigPoly::zeros(3).div_sin(1e-12).unwrap();
        assert!(z.max_abs() < 1e-15);
        // cos(theta) is not divisible
        assert!(TrigPoly::cosine(1, 1.0).div_sin(1e-12).is_err());
    }

    #[test]
    fn jet_zero_phases_has_no_noise_terms() {
        let seq = PhaseSequence::new(vec![0.0; 4]).unwrap();
        let jet = EpsJet::qsp(&seq, 2);
        assert!(jet.coeff(1).max_abs() < 1e-15);
        assert!(jet.coeff(2).max_abs() < 1e-15);
        for i in 0..32 {
            let theta = PI * (i as f64 + 0.5) / 32.0;
            let u = jet.coeff(0).eval(theta);
            assert!(u.max_abs_diff(&qsp_eval(&seq, theta, 0.0)) < 1e-13);
        }
    }

    #[test]
    fn jet_single_rotation_first_order() {
        let phi = 0.83;
        let seq = PhaseSequence::new(vec![phi]).unwrap();
        let jet = EpsJet::qsp(&seq, 1);
        // J_1 = i phi Z e^{i phi Z}
        let expect = [
            Complex64::new(0.0, phi) * Complex64::from_polar(1.0, phi),
            Complex64::new(0.0, -phi) * Complex64::from_polar(1.0, -phi),
        ];
        assert!((jet.coeff(1).e[0][0].coeff(0) - expect[0]).norm() < 1e-15);
        assert!((jet.coeff(1).e[1][1].coeff(0) - expect[1]).norm() < 1e-15);
        assert!(jet.coeff(1).off_diag_max() < 1e-15);
    }

    #[test]
    fn jet_matches_eval_to_truncation_order() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..10 {
            let d = 1 + (rng.next_u64() % 5) as usize;
            let seq = PhaseSequence::random_uniform(d, &mut rng);
            let jet = EpsJet::qsp(&seq, 3);
            let theta = rng.uniform(0.1, PI - 0.1);
            for eps in [1e-3, 3e-3] {
                let diff = jet.eval(theta, eps).max_abs_diff(&qsp_eval(&seq, theta, eps));
                // Truncation error scales like eps^4 with a d-dependent constant.
                assert!(diff < 1e3 * eps.powi(4), "diff {diff:.3e} at eps {eps}");
            }
        }
    }

    #[test]
    fn truncated_unitarity_to_order_four() {
        let mut rng = SplitMix64::new(29);
        for _ in 0..6 {
            let d = 1 + (rng.next_u64() % 5) as usize;
            let seq = PhaseSequence::random_uniform(d, &mut rng);
            let jet = EpsJet::qsp(&seq, 4);
            assert!(jet.unitarity_defect() < 1e-10);
        }
    }

    #[test]
    fn jet_mode_count_bound() {
        let mut rng = SplitMix64::new(31);
        let d = 6;
        let seq = PhaseSequence::random_uniform(d, &mut rng);
        let jet = EpsJet::qsp(&seq, 3);
        for k in 0..=3 {
            for r in 0..2 {
                for c in 0..2 {
                    let eff = jet.coeff(k).e[r][c].effective_half(1e-13).unwrap_or(0);
                    assert!(eff <= d, "entry ({r},{c}) of J_{k} has half-degree {eff} > d");
                }
            }
        }
    }

    #[test]
    fn decomp_zero_phases_is_zero() {
        let seq = PhaseSequence::new(vec![0.0; 3]).unwrap();
        let layers = pauli_error_decomp(&EpsJet::qsp(&seq, 2));
        for layer in &layers {
            for h in &layer.h {
                assert!(h.max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn decomp_single_rotation_is_pure_z() {
        let phi = 1.21;
        let seq = PhaseSequence::new(vec![phi]).unwrap();
        let layers = pauli_error_decomp(&EpsJet::qsp(&seq, 1));
        let layer = &layers[0];
        // E_1 = i phi Z: the Z component is i phi, X and Y vanish.
        assert!((layer.h_z().coeff(0) - Complex64::new(0.0, phi)).norm() < 1e-14);
        assert!(layer.h_x().max_abs() < 1e-14);
        assert!(layer.h_y().max_abs() < 1e-14);
        assert!(layer.h[0].max_abs() < 1e-14);
    }

    // Length-1 sequence (phi_0, phi_1): -i E_1 must equal
    //   phi_0 sin(2 theta) sin(2 phi_1) X
    // - phi_0 sin(2 theta) cos(2 phi_1) Y
    // + (phi_0 cos(2 theta) + phi_1) Z.
    #[test]
    fn d1_closed_form_components() {
        let (p0, p1) = (0.3, 0.7);
        let seq = PhaseSequence::new(vec![p0, p1]).unwrap();
        let layers = pauli_error_decomp(&EpsJet::qsp(&seq, 1));
        let layer = &layers[0];
        let i = Complex64::new(0.0, 1.0);

        let want_x = TrigPoly::sine(2, p0 * (2.0 * p1).sin()).scale(i);
        let want_y = TrigPoly::sine(2, -p0 * (2.0 * p1).cos()).scale(i);
        let want_z = TrigPoly::cosine(2, p0)
            .add(&TrigPoly::constant(Complex64::new(p1, 0.0)))
            .scale(i);
        assert!(layer.h_x().sub(&want_x).max_abs() < 1e-13);
        assert!(layer.h_y().sub(&want_y).max_abs() < 1e-13);
        assert!(layer.h_z().sub(&want_z).max_abs() < 1e-13);
    }

    #[test]
    fn d1_error_polys() {
        let (p0, p1) = (0.3, 0.7);
        let seq = PhaseSequence::new(vec![p0, p1]).unwrap();
        let layers = pauli_error_decomp(&EpsJet::qsp(&seq, 1));
        let (x, y) = extract_error_polys(&layers[0]).unwrap();
        // x = 2 phi_0 sin(2 phi_1) cos(theta), y = -2 phi_0 cos(2 phi_1) cos(theta)
        assert!((x.coeff(1).re - 2.0 * p0 * (2.0 * p1).sin()).abs() < 1e-13);
        assert!((y.coeff(1).re - (-2.0 * p0 * (2.0 * p1).cos())).abs() < 1e-13);
        assert_eq!(x.degree(1e-12), Some(1));
        assert!(x.max_imag() < 1e-13);
        assert!(x.even_part_max() < 1e-13);
    }

    #[test]
    fn first_order_hermiticity_and_parity() {
        let mut rng = SplitMix64::new(41);
        for _ in 0..8 {
            let d = 1 + (rng.next_u64() % 6) as usize;
            let seq = PhaseSequence::random_uniform(d, &mut rng);
            let layers = pauli_error_decomp(&EpsJet::qsp(&seq, 1));
            let layer = &layers[0];
            let minus_i = Complex64::new(0.0, -1.0);
            for h in &layer.h {
                assert!(h.scale(minus_i).is_real_valued(1e-10));
            }
            // X and Y components are odd in theta and vanish at 0 and pi.
            for h in [layer.h_x(), layer.h_y()] {
                assert!(h.is_odd(1e-10));
                assert!(h.eval(0.0).norm() < 1e-10);
                assert!(h.eval(PI).norm() < 1e-10);
            }
            let (x, y) = extract_error_polys(layer).unwrap();
            assert!(x.even_part_max() < 1e-9);
            assert!(y.even_part_max() < 1e-9);
            assert!(x.degree(1e-9).map_or(0, |v| v) <= 2 * d - 1);
        }
    }

    #[test]
    fn extraction_rejects_non_odd_component() {
        let layer = PauliErrorLayer {
            order: 1,
            h: [
                TrigPoly::zero(),
                TrigPoly::cosine(1, 1.0),
                TrigPoly::zero(),
                TrigPoly::zero(),
            ],
        };
        assert!(matches!(
            extract_error_polys(&layer),
            Err(SeriesError::NotOdd { .. })
        ));
    }

    #[test]
    fn error_poly_clenshaw_eval() {
        // x = 3 T_1 + 0.5 T_3
        let p = ErrorPoly::from_coeffs(vec![
            ZERO,
            Complex64::new(3.0, 0.0),
            ZERO,
            Complex64::new(0.5, 0.0),
        ]);
        for i in 0..9 {
            let x = -1.0 + 0.25 * i as f64;
            let want = 3.0 * x + 0.5 * (4.0 * x * x * x - 3.0 * x);
            assert!((p.eval(x).re - want).abs() < 1e-13);
        }
    }
}
