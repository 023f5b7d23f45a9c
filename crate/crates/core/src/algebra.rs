//! Momentum-space representation of the q-deformed Heisenberg algebra.
//!
//! States are finitely supported: every operator here maps a finite
//! combination of basis labels to another finite combination, so the
//! unbounded operators P and X never leave that subspace. Domain questions
//! for the closure are not modelled.
//!
//! The Fock-basis action of X ([`hermite_apply_x`]) comes from the q-Hermite
//! recursion. The momentum-space construction of Fock states exists to
//! cross-check it and the closed-form matrix elements.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qcore::{bracket, ModelParameters};

/// Relative size below which dropped ground-state coefficients are ignored.
pub const GROUND_STATE_TAIL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Basis label `|n, σ⟩` (momentum) or `|n⟩_σ` (Fock, `n >= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub n: i64,
    pub sigma: Sign,
}

impl Label {
    pub fn new(n: i64, sigma: Sign) -> Self {
        Self { n, sigma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Momentum,
    Fock,
}

impl BasisKind {
    fn name(self) -> &'static str {
        match self {
            BasisKind::Momentum => "momentum",
            BasisKind::Fock => "fock",
        }
    }
}

/// Finitely supported vector over a labelled orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    kind: BasisKind,
    entries: BTreeMap<Label, Complex64>,
}

impl StateVector {
    pub fn zero(kind: BasisKind) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// A single basis vector.
    pub fn basis(kind: BasisKind, label: Label) -> Result<Self> {
        let mut v = Self::zero(kind);
        v.add_at(label, Complex64::new(1.0, 0.0))?;
        Ok(v)
    }

    pub fn from_entries<I>(kind: BasisKind, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Label, Complex64)>,
    {
        let mut v = Self::zero(kind);
        for (label, c) in entries {
            v.add_at(label, c)?;
        }
        Ok(v)
    }

    /// Fock vector from real coefficients indexed by level.
    pub fn fock_from_real(coefficients: &[f64]) -> Self {
        let entries = coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(n, c)| (Label::new(n as i64, Sign::Plus), Complex64::new(*c, 0.0)))
            .collect();
        Self {
            kind: BasisKind::Fock,
            entries,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Accumulate `c` onto the coefficient of `label`.
    pub fn add_at(&mut self, label: Label, c: Complex64) -> Result<()> {
        if self.kind == BasisKind::Fock && label.n < 0 {
            return Err(Error::InvalidParameter(format!(
                "Fock labels must be >= 0 (got {})",
                label.n
            )));
        }
        *self.entries.entry(label).or_insert(Complex64::new(0.0, 0.0)) += c;
        Ok(())
    }

    fn push(&mut self, label: Label, c: Complex64) {
        *self.entries.entry(label).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    pub fn get(&self, label: Label) -> Complex64 {
        self.entries
            .get(&label)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &Complex64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest and largest retained `n` over both sectors.
    pub fn support(&self) -> Option<(i64, i64)> {
        let lo = self.entries.keys().map(|l| l.n).min()?;
        let hi = self.entries.keys().map(|l| l.n).max()?;
        Some((lo, hi))
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Hermitian inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let (small, large, conj_small) = if self.len() <= other.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        small
            .entries
            .iter()
            .filter_map(|(l, a)| large.entries.get(l).map(|b| (a, b)))
            .map(|(a, b)| if conj_small { a.conj() * b } else { b.conj() * a })
            .sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            kind: self.kind,
            entries: self.entries.iter().map(|(l, v)| (*l, v * c)).collect(),
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &Self) -> Result<Self> {
        if self.kind != other.kind {
            return Err(Error::WrongBasis {
                expected: self.kind.name(),
            });
        }
        let mut out = self.clone();
        for (l, v) in &other.entries {
            out.push(*l, v * c);
        }
        Ok(out)
    }

    /// Dense Fock coefficients for levels `0..dim` in the σ = +1 sector.
    pub fn fock_dense(&self, dim: usize) -> Result<Vec<Complex64>> {
        self.expect(BasisKind::Fock)?;
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (l, v) in &self.entries {
            if l.sigma == Sign::Plus && (l.n as usize) < dim {
                out[l.n as usize] += v;
            }
        }
        Ok(out)
    }

    fn expect(&self, kind: BasisKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongBasis {
                expected: kind.name(),
            })
        }
    }

    fn map_labels<F>(&self, mut f: F) -> Self
    where
        F: FnMut(&Label, &Complex64, &mut Self),
    {
        let mut out = Self::zero(self.kind);
        for (l, v) in &self.entries {
            f(l, v, &mut out);
        }
        out
    }
}

/// Ladder coefficients for M = 1:
/// `α = i / sqrt(1 - q^{-2})`, `β = i / sqrt(2mω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderConstants {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl LadderConstants {
    pub fn new(params: &ModelParameters) -> Result<Self> {
        params.require_deformed()?;
        let one_minus = -(-2.0 * params.ln_q()).exp_m1();
        Ok(Self {
            alpha: Complex64::new(0.0, 1.0 / one_minus.sqrt()),
            beta: Complex64::new(0.0, 1.0 / (2.0 * params.mass() * params.omega()).sqrt()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// `a = α U^{-2} + β U^{-1} P`
    Annihilate,
    /// `a† = ᾱ U^2 + β̄ P U`
    Create,
}

/// `P|n,σ⟩ = σ q^n |n,σ⟩`.
pub fn apply_p(v: &StateVector, params: &ModelParameters) -> Result<StateVector> {
    v.expect(BasisKind::Momentum)?;
    let ln_q = params.ln_q();
    Ok(v.map_labels(|l, c, out| {
        let eig = l.sigma.value() * (l.n as f64 * ln_q).exp();
        out.push(*l, c * eig);
    }))
}

/// `U^{direction}`: `U|n,σ⟩ = |n-1,σ⟩` for `direction = 1`, the inverse
/// shift for `direction = -1`.
pub fn apply_u(v: &StateVector, direction: i32) -> Result<StateVector> {
    v.expect(BasisKind::Momentum)?;
    if direction != 1 && direction != -1 {
        return Err(Error::InvalidParameter(format!(
            "U direction must be +1 or -1 (got {direction})"
        )));
    }
    let shift = -(direction as i64);
    Ok(v.map_labels(|l, c, out| out.push(Label::new(l.n + shift, l.sigma), *c)))
}

fn shift(v: &StateVector, by: i64) -> StateVector {
    v.map_labels(|l, c, out| out.push(Label::new(l.n + by, l.sigma), *c))
}

/// `X|n,σ⟩ = iσ q^{-n}/(q - q^{-1}) (q^{1/2}|n-1,σ⟩ - q^{-1/2}|n+1,σ⟩)`.
pub fn apply_x(v: &StateVector, params: &ModelParameters) -> Result<StateVector> {
    v.expect(BasisKind::Momentum)?;
    params.require_deformed()?;
    let q = params.q();
    let ln_q = params.ln_q();
    let inv_width = 1.0 / (q - 1.0 / q);
    let (sq, isq) = (q.sqrt(), 1.0 / q.sqrt());
    Ok(v.map_labels(|l, c, out| {
        let pref = Complex64::new(0.0, l.sigma.value() * (-(l.n as f64) * ln_q).exp() * inv_width);
        let base = c * pref;
        out.push(Label::new(l.n - 1, l.sigma), base * sq);
        out.push(Label::new(l.n + 1, l.sigma), -base * isq);
    }))
}

pub fn apply_ladder(v: &StateVector, which: Ladder, params: &ModelParameters) -> Result<StateVector> {
    v.expect(BasisKind::Momentum)?;
    let k = LadderConstants::new(params)?;
    match which {
        Ladder::Annihilate => {
            let first = shift(v, 2).scaled(k.alpha);
            let second = shift(&apply_p(v, params)?, 1).scaled(k.beta);
            first.axpy(Complex64::new(1.0, 0.0), &second)
        }
        Ladder::Create => {
            let first = shift(v, -2).scaled(k.alpha.conj());
            let second = apply_p(&shift(v, -1), params)?.scaled(k.beta.conj());
            first.axpy(Complex64::new(1.0, 0.0), &second)
        }
    }
}

/// `(-σα/β)` and the peak position of the ground-state coefficients.
fn ground_state_geometry(sigma: Sign, params: &ModelParameters) -> Result<(Complex64, f64)> {
    let k = LadderConstants::new(params)?;
    let ratio = -k.alpha / k.beta * sigma.value();
    // |c_n| ∝ |r|^n q^{-(n^2+n)/2} is maximal where |r| q^{-(n+1/2)} = 1
    let peak = ratio.norm().ln() / params.ln_q() - 0.5;
    Ok((ratio, peak))
}

/// Smallest symmetric half-width around the coefficient peak whose dropped
/// coefficients are below [`GROUND_STATE_TAIL`] of the peak, plus margin.
pub fn default_momentum_cutoff(params: &ModelParameters) -> Result<usize> {
    params.require_deformed()?;
    // ln|c_{peak+d}/c_peak| ≈ -d^2 ln q / 2
    let d = (2.0 * (1.0 / GROUND_STATE_TAIL).ln() / params.ln_q()).sqrt();
    Ok(d.ceil() as usize + 4)
}

/// Normalized ground state `|0⟩_σ` in the momentum basis, with coefficients
/// `c_0 (-σα/β)^n q^{-(n^2+n)/2}` on the window `peak ± cutoff`.
pub fn ground_state_momentum(
    sigma: Sign,
    cutoff: usize,
    params: &ModelParameters,
) -> Result<StateVector> {
    let (ratio, peak) = ground_state_geometry(sigma, params)?;
    let ln_q = params.ln_q();
    let ln_r = ratio.norm().ln();
    let unit = ratio / ratio.norm();
    let center = peak.round() as i64;
    let log_mag = |n: i64| n as f64 * ln_r - 0.5 * ((n * n + n) as f64) * ln_q;
    let peak_log = log_mag(center);
    let lo = center - cutoff as i64;
    let hi = center + cutoff as i64;

    let edge = (log_mag(lo).max(log_mag(hi)) - peak_log).exp();
    if edge >= GROUND_STATE_TAIL {
        return Err(Error::CutoffTooSmall {
            cutoff,
            edge_ratio: edge,
            limit: GROUND_STATE_TAIL,
        });
    }

    let mut v = StateVector::zero(BasisKind::Momentum);
    for n in lo..=hi {
        let phase = unit.powi(n as i32);
        v.push(Label::new(n, sigma), phase * (log_mag(n) - peak_log).exp());
    }
    let norm = v.norm();
    Ok(v.scaled(Complex64::new(1.0 / norm, 0.0)))
}

/// `|n⟩_σ = (a†)^n |0⟩_σ / sqrt([n]!)` in the momentum basis.
pub fn fock_state_momentum(
    n: usize,
    sigma: Sign,
    cutoff: usize,
    params: &ModelParameters,
) -> Result<StateVector> {
    let mut v = ground_state_momentum(sigma, cutoff, params)?;
    for k in 1..=n {
        let norm = 1.0 / bracket(k, params).sqrt();
        v = apply_ladder(&v, Ladder::Create, params)?.scaled(Complex64::new(norm, 0.0));
    }
    Ok(v)
}

/// `⟨k+1|X|k⟩ = q^{2k+1/2} sqrt([k+1]) / sqrt(2mω)`, from the q-Hermite
/// recursion `ξH_k = (√q q^{2k}/2)(H_{k+1} + 2q^{-2}[k]H_{k-1})`, `ξ = √(mω) X`.
pub fn fock_x_element(k: usize, params: &ModelParameters) -> f64 {
    let q_pow = ((2.0 * k as f64 + 0.5) * params.ln_q()).exp();
    q_pow * (bracket(k + 1, params) / (2.0 * params.mass() * params.omega())).sqrt()
}

/// X in the Fock basis. Couples `k` to `k ± 1` only, so the bounded sector
/// is mapped into itself.
pub fn hermite_apply_x(v: &StateVector, params: &ModelParameters) -> Result<StateVector> {
    v.expect(BasisKind::Fock)?;
    Ok(v.map_labels(|l, c, out| {
        let k = l.n as usize;
        out.push(Label::new(l.n + 1, l.sigma), c * fock_x_element(k, params));
        if k > 0 {
            out.push(Label::new(l.n - 1, l.sigma), c * fock_x_element(k - 1, params));
        }
    }))
}
