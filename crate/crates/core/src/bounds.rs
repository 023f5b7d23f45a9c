//! Executable versions of the matrix-element and series estimates.
//!
//! Every comparison is exact on the computed doubles: ties count as
//! failures for strict relations, and no slack is added.
//!
//! Two normalizations meet here. The element sandwiches carry the same
//! `(1/2mω)^2` prefactor as [`hprime_element`], while `C(q)` is the bare
//! function of q, so `(2mω)^2 ⟨n+i|H'|n⟩ < C(q)`. The series estimates use
//! [`element_bound`], which is `C(q)` whenever `2mω >= 1` (in particular for
//! the default units) and is scaled up otherwise so it still bounds H'.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{hprime_element, BAND_OFFSETS};
use crate::qcore::{bracket, bracket_kernel, energy_gap, n_max, q_power, ModelParameters};

/// Number of levels reachable from any level through one H' matrix element.
pub const BRANCHING: f64 = 5.0;

/// Largest value of `q^{-2x}[x]^2 (1 - q^{-2})^2`, attained at `x = n_max`.
pub const PEAK_CONSTANT: f64 = 4.0 / 27.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    StrictLess,
    Leq,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::StrictLess => lhs < rhs,
            Relation::Leq => lhs <= rhs,
        }
    }
}

/// One evaluated inequality `lhs (< | <=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub name: String,
    pub n: Option<usize>,
    pub offset: Option<usize>,
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub satisfied: bool,
}

impl BoundCertificate {
    pub fn new(name: impl Into<String>, q: f64, lhs: f64, rhs: f64, relation: Relation) -> Self {
        Self {
            name: name.into(),
            n: None,
            offset: None,
            q,
            lhs,
            rhs,
            relation,
            satisfied: relation.holds(lhs, rhs),
        }
    }

    pub fn at(mut self, n: usize, offset: Option<usize>) -> Self {
        self.n = Some(n);
        self.offset = offset;
        self
    }
}

/// Lower and upper bounds on `⟨n+offset|H'|n⟩`:
///
/// * offset 4: `½(1+q^{-40}) q^{14-2n} [n]^2` .. `[n+4]^2`
/// * offset 2: `½(1+q^{-20}) q^{12-2n} [4]_4 [n]^2` .. `[n+3]^2`
/// * offset 0: `q^{6-2n} [3]_4 [2]_8 [n]^2` .. `[n+2]^2`
///
/// all times `(1/2mω)^2`.
pub fn hprime_bound_pair(n: usize, offset: usize, params: &ModelParameters) -> Result<(f64, f64)> {
    params.require_deformed()?;
    let ln_q = params.ln_q();
    let b = |k: usize| bracket(k, params);
    let bi = |k: f64, i: f64| bracket_kernel(k, i, ln_q);
    let qp = |e: f64| q_power(e, params);
    let nf = n as f64;
    let pre = params.x4_prefactor();
    let (scale, upper_arg) = match offset {
        4 => (0.5 * (1.0 + qp(-40.0)) * qp(14.0 - 2.0 * nf), n + 4),
        2 => (0.5 * (1.0 + qp(-20.0)) * qp(12.0 - 2.0 * nf) * bi(4.0, 4.0), n + 3),
        0 => (qp(6.0 - 2.0 * nf) * bi(3.0, 4.0) * bi(2.0, 8.0), n + 2),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "bound offset must be 0, 2 or 4 (got {offset})"
            )))
        }
    };
    Ok((pre * scale * b(n).powi(2), pre * scale * b(upper_arg).powi(2)))
}

/// Both closed forms of `C(q)`:
/// `q^{-2n_max+10}[3]_4[2]_8[n_max]^2` and `4q^{10}[3]_4[2]_8 / (27(1-q^{-2})^2)`.
pub fn c_bound_forms(params: &ModelParameters) -> Result<(f64, f64)> {
    params.require_window()?;
    let ln_q = params.ln_q();
    let nm = n_max(params)?;
    let brackets = bracket_kernel(3.0, 4.0, ln_q) * bracket_kernel(2.0, 8.0, ln_q);
    let at_peak = q_power(-2.0 * nm + 10.0, params) * brackets * bracket_kernel(nm, 2.0, ln_q).powi(2);
    let one_minus = -(-2.0 * ln_q).exp_m1();
    let closed = 4.0 * q_power(10.0, params) * brackets / (27.0 * one_minus * one_minus);
    Ok((at_peak, closed))
}

/// `C(q)`, valid for 1 < q < 1.06.
pub fn c_bound(params: &ModelParameters) -> Result<f64> {
    Ok(c_bound_forms(params)?.0)
}

/// Bound on every `|⟨n+i|H'|n⟩|` as implemented: `C(q) max(1, (2mω)^{-2})`.
pub fn element_bound(params: &ModelParameters) -> Result<f64> {
    Ok(c_bound(params)? * params.x4_prefactor().max(1.0))
}

fn window_expressions(ln_q: f64) -> (f64, f64) {
    let qp = |e: f64| (e * ln_q).exp();
    let b34 = bracket_kernel(3.0, 4.0, ln_q);
    let b28 = bracket_kernel(2.0, 8.0, ln_q);
    let b44 = bracket_kernel(4.0, 4.0, ln_q);
    let offset4 = 2.0 * qp(-16.0) * b34 * b28 / (1.0 + qp(-40.0));
    let offset2 = 2.0 * b34 * b28 / (qp(12.0) * b44 * (1.0 + qp(-20.0)));
    (offset4, offset2)
}

/// The two q-window inequalities that let the offset-4 and offset-2
/// elements be dominated by the diagonal peak:
///
/// * `1 < 2q^{-16}[3]_4[2]_8 / (1 + q^{-40})`
/// * `1 < 2[3]_4[2]_8 / (q^{12}[4]_4(1 + q^{-20}))`
///
/// The second is labelled "i=1" in the source derivation; it governs the
/// offset-2 comparison and is named accordingly.
pub fn window_inequalities(params: &ModelParameters) -> Vec<BoundCertificate> {
    let (a, b) = window_expressions(params.ln_q());
    vec![
        BoundCertificate::new("window_offset4", params.q(), 1.0, a, Relation::StrictLess),
        BoundCertificate::new("window_offset2", params.q(), 1.0, b, Relation::StrictLess),
    ]
}

/// First q on the grid `q_lo, q_lo + step, ...` (up to `q_hi`) where either
/// window inequality fails.
pub fn window_failure_onset(q_lo: f64, q_hi: f64, step: f64) -> Option<f64> {
    let steps = ((q_hi - q_lo) / step).round() as usize;
    (0..=steps)
        .map(|k| q_lo + k as f64 * step)
        .find(|&q| {
            let (a, b) = window_expressions(q.ln());
            !(1.0 < a && 1.0 < b)
        })
}

/// `[i] q^{-2n} ω`, a lower bound on `|E_n - E_{n±i}|`.
pub fn gap_lower_bound(n: usize, i: usize, params: &ModelParameters) -> f64 {
    params.omega() * q_power(-2.0 * n as f64, params) * bracket(i, params)
}

/// Certificates for both branches of the gap bound at `(n, i)`.
pub fn gap_certificates(n: usize, i: usize, params: &ModelParameters) -> Vec<BoundCertificate> {
    let bound = gap_lower_bound(n, i, params);
    let mut out = vec![BoundCertificate::new(
        "gap_upper",
        params.q(),
        bound,
        energy_gap(n + i, n, params),
        Relation::Leq,
    )
    .at(n, Some(i))];
    if n >= i {
        out.push(
            BoundCertificate::new(
                "gap_lower",
                params.q(),
                bound,
                energy_gap(n - i, n, params).abs(),
                Relation::Leq,
            )
            .at(n, Some(i)),
        );
    }
    out
}

/// Smallest unperturbed gap seen from level n, `[2] ω q^{-2n}`.
pub fn gap_scale(n: usize, params: &ModelParameters) -> f64 {
    gap_lower_bound(n, 2, params)
}

/// θ = `5 (|γ| C + |ΔE|) / ([2] ω q^{-2n})`.
pub fn convergence_ratio(
    n: usize,
    gamma_abs: f64,
    delta_e_abs: f64,
    params: &ModelParameters,
) -> Result<f64> {
    let c = element_bound(params)?;
    Ok(BRANCHING * (gamma_abs * c + delta_e_abs) / gap_scale(n, params))
}

/// Majorant `Ē_n^(k) = (|γ|C)^2 (|γ|C + |ΔE|)^{k-2} 5^{k-1} / ([2]ωq^{-2n})^{k-1}`
/// for `k >= 2`, accumulated as `Ē^(2) θ^{k-2}` so that consecutive terms
/// differ by exactly one multiplication by θ.
pub fn majorant_term(
    n: usize,
    k: usize,
    gamma_abs: f64,
    delta_e_abs: f64,
    params: &ModelParameters,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "majorant is defined for orders k >= 2 (got {k})"
        )));
    }
    let c = element_bound(params)?;
    let theta = convergence_ratio(n, gamma_abs, delta_e_abs, params)?;
    let gc = gamma_abs * c;
    let mut term = gc * gc * BRANCHING / gap_scale(n, params);
    for _ in 2..k {
        term *= theta;
    }
    Ok(term)
}

/// `Σ_{j>k} Ē^(j) = Ē^(k+1) / (1 - θ)` for `k >= 1`; infinite when θ >= 1.
pub fn majorant_tail(
    n: usize,
    k: usize,
    gamma_abs: f64,
    delta_e_abs: f64,
    params: &ModelParameters,
) -> Result<f64> {
    let theta = convergence_ratio(n, gamma_abs, delta_e_abs, params)?;
    if theta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("tail order must be >= 1".into()));
    }
    let next = majorant_term(n, k + 1, gamma_abs, delta_e_abs, params)?;
    Ok(next / (1.0 - theta))
}

/// Level-n convergence radius `γ_n(q) = ω([2]q^{-2n} - 1) / (5C)`.
pub fn gamma_radius(n: usize, params: &ModelParameters) -> Result<f64> {
    params.require_deformed()?;
    let numerator = gap_scale(n, params) - params.omega();
    if numerator <= 0.0 {
        return Err(Error::NonPositiveRadius {
            n,
            q: params.q(),
            numerator: numerator / params.omega(),
        });
    }
    Ok(numerator / (BRANCHING * element_bound(params)?))
}

/// Upper bound on `⟨E_n|E_n⟩` for the unnormalized eigenstate series:
/// `1 + Σ_{m>=0} θ^{|m-n|/2} / (1 - θ^2)`.
pub fn state_norm_bound(n: usize, theta: f64) -> f64 {
    if theta >= 1.0 {
        return f64::INFINITY;
    }
    let s = theta.sqrt();
    // Σ_{d>=0} s^d + Σ_{d=1}^{n} s^d
    let above = 1.0 / (1.0 - s);
    let below = s * (1.0 - s.powi(n as i32)) / (1.0 - s);
    1.0 + (above + below) / (1.0 - theta * theta)
}

/// Every certificate at one q: element sandwiches and C(q) dominance for
/// `n <= min(40, 3 n_max)`, the dominance scan to `5 n_max`, the dual form
/// of C(q), the gap bounds for i in {2, 4}, and the window inequalities.
pub fn certificates_for(params: &ModelParameters) -> Result<Vec<BoundCertificate>> {
    params.require_deformed()?;
    let q = params.q();
    let nm = n_max(params)?;
    let top = ((3.0 * nm).floor() as usize).min(40);
    let norm = 1.0 / params.x4_prefactor();
    let (c, c_closed) = c_bound_forms(params)?;
    let mut out = Vec::new();

    for n in 0..=top {
        for offset in BAND_OFFSETS {
            let h = hprime_element(n, offset, params)?;
            let (lo, up) = hprime_bound_pair(n, offset, params)?;
            out.push(BoundCertificate::new("hprime_lower", q, lo, h, Relation::StrictLess).at(n, Some(offset)));
            out.push(BoundCertificate::new("hprime_upper", q, h, up, Relation::StrictLess).at(n, Some(offset)));
            out.push(BoundCertificate::new("c_dominance", q, norm * h, c, Relation::StrictLess).at(n, Some(offset)));
        }
    }

    let scan_top = (5.0 * nm).ceil() as usize;
    let (arg, peak) = (0..=scan_top)
        .flat_map(|n| BAND_OFFSETS.iter().map(move |&o| (n, o)))
        .map(|(n, o)| ((n, o), hprime_element(n, o, params).unwrap_or(f64::INFINITY)))
        .fold(((0, 0), f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    out.push(BoundCertificate::new("c_dominance_scan", q, norm * peak, c, Relation::StrictLess).at(arg.0, Some(arg.1)));
    out.push(BoundCertificate::new("c_dual_form", q, (c - c_closed).abs(), 1e-12 * c, Relation::Leq));

    for n in 0..=top {
        for i in [2, 4] {
            out.extend(gap_certificates(n, i, params));
        }
    }
    out.extend(window_inequalities(params));
    Ok(out)
}
