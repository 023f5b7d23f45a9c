//! Rayleigh–Schrödinger series for a bounded-sector level n.
//!
//! Orders are produced by a vector recursion rather than by enumerating
//! paths. With `R = Q_n / (E_n - H_0)` (level n removed),
//!
//! ```text
//! w_1     = R H_1 |n⟩
//! w_{j+1} = R (H_1 - ΔE) w_j
//! E^(1)   = ⟨n|H_1|n⟩,   E^(k) = ⟨n|H_1 w_{k-1}⟩  (k >= 2)
//! |E_n⟩   = |n⟩ + Σ_j w_j
//! ```
//!
//! The contraction `⟨n|H_1 ·⟩` is bilinear (no conjugation), so complex γ
//! and ΔE give the analytic continuation of the real series.
//!
//! The energy sum is indexed from order 1 here; the zeroth summand of the
//! compact operator form is the first-order term `⟨n|H_1|n⟩`.

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::StateVector;
use crate::bounds::{
    convergence_ratio, element_bound, gamma_radius, majorant_tail, majorant_term,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_hamiltonian, hprime_kernel};
use crate::qcore::{energy_gap, energy_level, ModelParameters};
use crate::scalar::Scalar;

/// Hard cap on the truncation order picked from the majorant.
pub const MAX_ORDER_CAP: usize = 60;

/// Fraction of the certified radius at which solves are refused.
pub const RADIUS_FRACTION: f64 = 0.95;

/// Whether domain checks run before evaluating terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// q inside the window, |γ| below the radius, |ΔE| < ω/5.
    Certified,
    /// No checks. Used for q = 1 and exploratory runs.
    Uncertified,
}

/// How many orders to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderPolicy {
    /// Smallest K whose majorant tail is below tol/2, at most `cap`.
    Majorant { cap: usize },
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub order: OrderPolicy,
    pub max_iter: usize,
    /// Halve steps whose size grew relative to the previous one.
    pub damping: bool,
    /// Enforce the radius, θ < 1 and |ΔE| < ω/5 checks.
    pub certify: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            order: OrderPolicy::Majorant { cap: MAX_ORDER_CAP },
            max_iter: 100,
            damping: true,
            certify: true,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_order(mut self, order: OrderPolicy) -> Self {
        self.order = order;
        self
    }

    pub fn uncertified(mut self) -> Self {
        self.certify = false;
        self
    }
}

/// Order-k energy term with its majorant tail `Σ_{j>k} Ē^(j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesTerm {
    #[serde(rename = "k")]
    pub order: usize,
    pub value: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub n: usize,
    pub params: ModelParameters,
    pub delta_e: f64,
    pub orders: Vec<SeriesTerm>,
    /// θ at the returned ΔE.
    pub theta: f64,
    pub max_order: usize,
    pub iterations: usize,
    /// `|Σ_{k<=K} E^(k)(ΔE) - ΔE|` at the returned ΔE.
    pub fixed_point_residual: f64,
    /// Bound on `|ΔE - ΔE_exact|` from the majorant tail and the
    /// fixed-point residual.
    pub tail_bound: f64,
    pub gamma_radius: f64,
    pub state: Option<StateVector>,
    pub norm_sq: Option<f64>,
    pub residual: Option<f64>,
    pub certified: bool,
}

impl PerturbationResult {
    /// `E_n^(0) + ΔE_n`.
    pub fn energy(&self) -> f64 {
        energy_level(self.n, &self.params) + self.delta_e
    }

    /// Empirical ratios `|E^(k+1) / E^(k)|` for `k >= from`.
    pub fn term_ratios(&self, from: usize) -> Vec<(usize, f64)> {
        self.orders
            .windows(2)
            .filter(|w| w[0].order >= from)
            .map(|w| (w[0].order, (w[1].value / w[0].value).abs()))
            .collect()
    }
}

/// H' matrix elements and gaps around level n, for orders up to `max_order`.
struct Workspace {
    n: usize,
    dim: usize,
    /// `hp[d][m] = ⟨m+d|H'|m⟩` for d in {0, 2, 4}
    hp: [Vec<f64>; 3],
    /// `E_n - E_m`, with 0 at m = n
    gap: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, max_order: usize, params: &ModelParameters) -> Self {
        let dim = n + 4 * (max_order + 1) + 1;
        let ln_q = params.ln_q();
        let pre = params.x4_prefactor();
        let band = |d: usize| (0..dim).map(|m| hprime_kernel(m, d, ln_q, pre)).collect();
        Self {
            n,
            dim,
            hp: [band(0), band(2), band(4)],
            gap: (0..dim).map(|m| energy_gap(n, m, params)).collect(),
        }
    }

    /// `⟨m|H'|j⟩` for `|m - j|` in {0, 2, 4}.
    fn element(&self, m: usize, j: usize) -> f64 {
        let (lo, hi) = if m <= j { (m, j) } else { (j, m) };
        match hi - lo {
            0 => self.hp[0][lo],
            2 => self.hp[1][lo],
            4 => self.hp[2][lo],
            _ => 0.0,
        }
    }

    /// `y = (γH' - shift) x` on the index window `[lo, hi]`, writing `[lo-4, hi+4]`.
    fn apply<T: Scalar>(&self, x: &[T], lo: usize, hi: usize, gamma: T, shift: T) -> (Vec<T>, usize, usize) {
        let out_lo = lo.saturating_sub(4);
        let out_hi = (hi + 4).min(self.dim - 1);
        let mut y = vec![T::zero(); self.dim];
        for m in out_lo..=out_hi {
            let mut acc = T::zero();
            for d in [-4i64, -2, 0, 2, 4] {
                let j = m as i64 + d;
                if j < lo as i64 || j > hi as i64 {
                    continue;
                }
                acc += x[j as usize] * self.element(m, j as usize);
            }
            y[m] = gamma * acc - shift * x[m];
        }
        (y, out_lo, out_hi)
    }

    /// `Q_n (E_n - H_0)^{-1}` in place.
    fn resolve<T: Scalar>(&self, y: &mut [T], lo: usize, hi: usize) {
        for m in lo..=hi {
            if m == self.n {
                y[m] = T::zero();
            } else {
                debug_assert!(self.gap[m] != 0.0);
                y[m] = y[m] / self.gap[m];
            }
        }
    }

    /// `⟨n|γH' x⟩`.
    fn contract<T: Scalar>(&self, x: &[T], gamma: T) -> T {
        let n = self.n as i64;
        let mut acc = T::zero();
        for d in [-4i64, -2, 0, 2, 4] {
            let j = n + d;
            if j >= 0 && (j as usize) < self.dim {
                acc += x[j as usize] * self.element(self.n, j as usize);
            }
        }
        gamma * acc
    }
}

/// Energy terms `E^(1..=max_order)` together with the correction vectors
/// `w_1..=w_states` (dense, indexed by level).
fn recursion<T: Scalar>(
    n: usize,
    max_order: usize,
    states: usize,
    gamma: T,
    delta_e: T,
    params: &ModelParameters,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let ws = Workspace::new(n, max_order.max(states), params);
    let mut terms = Vec::with_capacity(max_order);
    let mut corrections = Vec::with_capacity(states);

    let e1 = gamma * ws.element(n, n);
    if !e1.is_finite() {
        return Err(Error::Overflow { order: 1 });
    }
    terms.push(e1);

    let mut unit = vec![T::zero(); ws.dim];
    unit[n] = T::from_real(1.0);
    let (mut w, mut lo, mut hi) = ws.apply(&unit, n, n, gamma, T::zero());
    ws.resolve(&mut w, lo, hi);

    let needed = max_order.saturating_sub(1).max(states);
    for j in 1..=needed {
        // w holds w_j
        if j < max_order {
            let e = ws.contract(&w, gamma);
            if !e.is_finite() {
                return Err(Error::Overflow { order: j + 1 });
            }
            terms.push(e);
        }
        if j <= states {
            corrections.push(w.clone());
        }
        if j < needed {
            let (mut next, nlo, nhi) = ws.apply(&w, lo, hi, gamma, delta_e);
            ws.resolve(&mut next, nlo, nhi);
            w = next;
            lo = nlo;
            hi = nhi;
        }
    }
    Ok((terms, corrections))
}

fn check_certified<T: Scalar>(n: usize, gamma: T, delta_e: T, params: &ModelParameters) -> Result<()> {
    params.require_window()?;
    let radius = gamma_radius(n, params)?;
    if gamma.modulus() >= radius {
        return Err(Error::CouplingOutsideRadius {
            gamma: gamma.modulus(),
            radius,
            fraction: 1.0,
        });
    }
    let limit = params.omega() / 5.0;
    if delta_e.modulus() >= limit {
        return Err(Error::EnergyShiftOutOfDomain {
            delta_e: delta_e.modulus(),
            limit,
        });
    }
    Ok(())
}

/// Terms `E_n^(1)..E_n^(max_order)` at fixed `(ΔE, γ)`.
pub fn energy_terms<T: Scalar>(
    n: usize,
    max_order: usize,
    gamma: T,
    delta_e: T,
    params: &ModelParameters,
    mode: EvalMode,
) -> Result<Vec<T>> {
    if max_order == 0 {
        return Err(Error::InvalidParameter("max_order must be >= 1".into()));
    }
    if mode == EvalMode::Certified {
        check_certified(n, gamma, delta_e, params)?;
    }
    Ok(recursion(n, max_order, 0, gamma, delta_e, params)?.0)
}

/// The single term `E_n^(k)`.
pub fn energy_term<T: Scalar>(
    n: usize,
    k: usize,
    gamma: T,
    delta_e: T,
    params: &ModelParameters,
    mode: EvalMode,
) -> Result<T> {
    if k == 0 {
        return Err(Error::InvalidParameter("order k must be >= 1".into()));
    }
    Ok(energy_terms(n, k, gamma, delta_e, params, mode)?[k - 1])
}

/// Correction vectors `w_1..w_orders`, each dense over levels.
pub fn correction_vectors<T: Scalar>(
    n: usize,
    orders: usize,
    gamma: T,
    delta_e: T,
    params: &ModelParameters,
) -> Result<Vec<Vec<T>>> {
    Ok(recursion(n, 1, orders, gamma, delta_e, params)?.1)
}

fn pick_order(
    n: usize,
    gamma_abs: f64,
    delta_abs: f64,
    tol: f64,
    policy: OrderPolicy,
    params: &ModelParameters,
) -> Result<usize> {
    match policy {
        OrderPolicy::Fixed(k) if k >= 1 => Ok(k),
        OrderPolicy::Fixed(_) => Err(Error::InvalidParameter("fixed order must be >= 1".into())),
        OrderPolicy::Majorant { cap } => {
            if gamma_abs == 0.0 {
                return Ok(1);
            }
            for k in 2..=cap {
                if majorant_tail(n, k, gamma_abs, delta_abs, params)? < tol / 2.0 {
                    return Ok(k);
                }
            }
            Err(Error::NonContraction(format!(
                "majorant tail is not below tol/2 = {:e} by order {cap}",
                tol / 2.0
            )))
        }
    }
}

/// Self-consistent `ΔE_n = Σ_{k<=K} E^(k)(ΔE_n, γ)` by fixed-point
/// iteration starting from 0. Fills energies only; see
/// [`eigenstate_series`] and [`certify_eigenpair`] or use [`solve_level`].
///
/// With `opts.certify` off the radius, θ and |ΔE| checks are skipped and
/// the result is flagged uncertified (its tail bound may be infinite).
pub fn solve_delta_e(
    n: usize,
    params: &ModelParameters,
    opts: &SolveOptions,
) -> Result<PerturbationResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be > 0 (got {})", opts.tol)));
    }
    params.require_window()?;
    let gamma = params.gamma();
    let g_abs = gamma.abs();
    let radius = match gamma_radius(n, params) {
        Ok(r) => r,
        Err(e) if opts.certify => return Err(e),
        Err(_) => 0.0,
    };
    if opts.certify && g_abs >= RADIUS_FRACTION * radius {
        return Err(Error::CouplingOutsideRadius {
            gamma: g_abs,
            radius,
            fraction: RADIUS_FRACTION,
        });
    }
    let limit = params.omega() / 5.0;
    let order_at = |delta: f64| -> Result<usize> {
        match pick_order(n, g_abs, delta.abs(), opts.tol, opts.order, params) {
            Ok(k) => Ok(k),
            Err(_) if !opts.certify => match opts.order {
                OrderPolicy::Majorant { cap } => Ok(cap.max(1)),
                OrderPolicy::Fixed(k) => Ok(k.max(1)),
            },
            Err(e) => Err(e),
        }
    };

    let mut delta = 0.0f64;
    let mut prev_step = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let theta = convergence_ratio(n, g_abs, delta.abs(), params)?;
        if opts.certify && theta >= 1.0 {
            return Err(Error::NonContraction(format!(
                "theta = {theta} >= 1 at iteration {iterations} (delta E = {delta})"
            )));
        }
        let k = order_at(delta)?;
        let update: f64 = recursion(n, k, 0, gamma, delta, params)?.0.iter().sum();
        let mut step = update - delta;
        if !step.is_finite() {
            return Err(Error::Overflow { order: k });
        }
        if opts.damping && step.abs() > prev_step {
            step *= 0.5;
        }
        delta += step;
        if opts.certify && delta.abs() >= limit {
            return Err(Error::EnergyShiftOutOfDomain {
                delta_e: delta.abs(),
                limit,
            });
        }
        prev_step = step.abs();
        if step.abs() < opts.tol / 2.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonContraction(format!(
            "no convergence after {} iterations (last step {prev_step:e})",
            opts.max_iter
        )));
    }

    let theta = convergence_ratio(n, g_abs, delta.abs(), params)?;
    let k = order_at(delta)?;
    let values = recursion(n, k, 0, gamma, delta, params)?.0;
    let fixed_point_residual = (values.iter().sum::<f64>() - delta).abs();
    if opts.certify && fixed_point_residual >= opts.tol {
        return Err(Error::NonContraction(format!(
            "fixed-point residual {fixed_point_residual:e} exceeds tol {:e}",
            opts.tol
        )));
    }

    let orders = values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            Ok(SeriesTerm {
                order: i + 1,
                value,
                tail_bound: if g_abs == 0.0 {
                    0.0
                } else {
                    majorant_tail(n, i + 1, g_abs, delta.abs(), params)?
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let tail_bound = if g_abs == 0.0 {
        fixed_point_residual
    } else if theta >= 1.0 {
        f64::INFINITY
    } else {
        // |∂/∂ΔE Σ_k E^(k)| <= Ē^(2) θ / ((1-θ)^2 (|γ|C + |ΔE|))
        let x = g_abs * element_bound(params)? + delta.abs();
        let lipschitz = majorant_term(n, 2, g_abs, delta.abs(), params)? * theta
            / ((1.0 - theta).powi(2) * x);
        let tail = orders.last().map(|t| t.tail_bound).unwrap_or(0.0);
        if lipschitz >= 1.0 {
            f64::INFINITY
        } else {
            (tail + fixed_point_residual) / (1.0 - lipschitz)
        }
    };

    let certified = params.in_certified_window()
        && theta < 1.0
        && delta.abs() < limit
        && g_abs < RADIUS_FRACTION * radius
        && tail_bound.is_finite();
    Ok(PerturbationResult {
        n,
        params: *params,
        delta_e: delta,
        orders,
        theta,
        max_order: k,
        iterations,
        fixed_point_residual,
        tail_bound,
        gamma_radius: radius,
        state: None,
        norm_sq: None,
        residual: None,
        certified,
    })
}

fn series_state(n: usize, delta_e: f64, params: &ModelParameters, max_order: usize) -> Result<StateVector> {
    let corrections = correction_vectors(n, max_order, params.gamma(), delta_e, params)?;
    let dim = n + 4 * max_order + 1;
    let mut coefficients = vec![0.0; dim];
    for w in &corrections {
        for (c, v) in coefficients.iter_mut().zip(w) {
            *c += v;
        }
    }
    coefficients[n] = 1.0;
    Ok(StateVector::fock_from_real(&coefficients))
}

/// `|E_n⟩ = |n⟩ + Σ_{k=1}^{max_order} w_k`, not normalized: the
/// coefficient of `|n⟩` is exactly 1.
pub fn eigenstate_series(
    n: usize,
    delta_e: f64,
    params: &ModelParameters,
    max_order: usize,
) -> Result<StateVector> {
    params.require_window()?;
    let theta = convergence_ratio(n, params.gamma().abs(), delta_e.abs(), params)?;
    if theta >= 1.0 {
        return Err(Error::NonContraction(format!("theta = {theta} >= 1")));
    }
    series_state(n, delta_e, params, max_order)
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub levels: usize,
    /// `‖(H - E_n^(0) - ΔE_n)|E_n⟩‖ / ‖|E_n⟩‖`
    pub residual: f64,
    /// Ten times the run's tail bound.
    pub ceiling: f64,
    pub within_ceiling: bool,
}

/// Residual of the series eigenpair against the Hamiltonian truncated to
/// `levels`, which must cover the state's support plus one band.
pub fn certify_eigenpair(
    result: &PerturbationResult,
    levels: usize,
    params: &ModelParameters,
) -> Result<ResidualReport> {
    if !result.params.same_physics(params) {
        return Err(Error::ParameterMismatch);
    }
    let required = result.n + 4 * result.max_order + 8;
    if levels < required {
        return Err(Error::TruncationTooSmall { levels, required });
    }
    let owned;
    let state = match &result.state {
        Some(s) => s,
        None => {
            owned = eigenstate_series(result.n, result.delta_e, params, result.max_order)?;
            &owned
        }
    };
    let h = build_hamiltonian(levels, params)?;
    let v: Vec<f64> = state.fock_dense(levels)?.iter().map(|c| c.re).collect();
    let hv = h.matvec(&v);
    let energy = result.energy();
    let r: f64 = hv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - energy * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let residual = r / norm;
    let ceiling = 10.0 * result.tail_bound;
    Ok(ResidualReport {
        levels,
        residual,
        ceiling,
        within_ceiling: residual <= ceiling,
    })
}

/// Energy solve, eigenstate and residual in one call.
pub fn solve_level(n: usize, params: &ModelParameters, opts: &SolveOptions) -> Result<PerturbationResult> {
    let mut result = solve_delta_e(n, params, opts)?;
    let state = if opts.certify {
        eigenstate_series(n, result.delta_e, params, result.max_order)?
    } else {
        series_state(n, result.delta_e, params, result.max_order)?
    };
    result.norm_sq = Some(state.norm_sq());
    result.state = Some(state);
    let levels = n + 4 * result.max_order + 8;
    result.residual = Some(certify_eigenpair(&result, levels, params)?.residual);
    Ok(result)
}

/// `|E_0^(k)|`-style terms at q = 1 with ΔE held at 0, where the undeformed
/// series diverges.
pub fn undeformed_terms(gamma: f64, max_order: usize, params: &ModelParameters) -> Result<Vec<f64>> {
    if !params.is_undeformed() {
        return Err(Error::InvalidParameter(
            "the divergence demonstration needs q = 1".into(),
        ));
    }
    energy_terms(0, max_order, gamma, 0.0, params, EvalMode::Uncertified)
}

/// Complex-coupling convenience wrapper.
pub fn energy_terms_complex(
    n: usize,
    max_order: usize,
    gamma: Complex64,
    delta_e: Complex64,
    params: &ModelParameters,
    mode: EvalMode,
) -> Result<Vec<Complex64>> {
    energy_terms(n, max_order, gamma, delta_e, params, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::state_norm_bound;
    use crate::hamiltonian::hprime_element;

    fn params(q: f64) -> ModelParameters {
        ModelParameters::with_q(q).unwrap()
    }

    fn half_radius(q: f64, n: usize) -> ModelParameters {
        let p = params(q);
        let g = 0.5 * gamma_radius(n, &p).unwrap();
        p.with_gamma(g)
    }

    #[test]
    fn zero_coupling_terms_vanish() {
        let p = params(1.03);
        let terms = energy_terms(2, 8, 0.0, 0.0, &p, EvalMode::Certified).unwrap();
        assert!(terms.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn first_order_is_diagonal_element() {
        let p = params(1.03);
        let g = 1e-4;
        for de in [0.0, 1e-3, -2e-3] {
            let e1 = energy_term(3, 1, g, de, &p, EvalMode::Certified).unwrap();
            assert_eq!(e1, g * hprime_element(3, 0, &p).unwrap());
        }
    }

    #[test]
    fn second_order_matches_dense_sum() {
        let p = params(1.03);
        let g = 2e-4;
        let h = crate::hamiltonian::build_hprime(20, &p).unwrap().to_dense();
        let mut expected = 0.0;
        for m in 1..20 {
            let e = h[(0, m)];
            if e != 0.0 {
                expected += g * g * e * e / (energy_level(0, &p) - energy_level(m, &p));
            }
        }
        let e2 = energy_term(0, 2, g, 0.0, &p, EvalMode::Certified).unwrap();
        assert!((e2 - expected).abs() <= 1e-14 * expected.abs());
        let two_term: f64 = [2usize, 4]
            .iter()
            .map(|&m| {
                let e = hprime_element(0, m, &p).unwrap();
                g * g * e * e / (-energy_level(m, &p))
            })
            .sum();
        assert!((e2 - two_term).abs() <= 1e-14 * two_term.abs());
    }

    #[test]
    fn third_order_matches_path_enumeration() {
        // brute-force path sum over n1, n2 != n with the shifted middle factor
        let p = params(1.04);
        let (n, g, de) = (2usize, 3e-4, 1e-3);
        let dim = 30;
        let h = crate::hamiltonian::build_hprime(dim, &p).unwrap().to_dense();
        let mut expected = 0.0;
        for n1 in 0..dim {
            for n2 in 0..dim {
                if n1 == n || n2 == n {
                    continue;
                }
                let mid = g * h[(n1, n2)] - if n1 == n2 { de } else { 0.0 };
                let num = g * h[(n, n1)] * mid * g * h[(n2, n)];
                expected += num / ((energy_level(n, &p) - energy_level(n1, &p)) * (energy_level(n, &p) - energy_level(n2, &p)));
            }
        }
        let e3 = energy_term(n, 3, g, de, &p, EvalMode::Certified).unwrap();
        assert!((e3 - expected).abs() <= 1e-13 * expected.abs(), "{e3} vs {expected}");
    }

    #[test]
    fn correction_support_grows_by_four_per_order() {
        let p = half_radius(1.03, 0);
        for n in [0usize, 3, 10] {
            let ws = correction_vectors(n, 8, p.gamma(), 1e-4, &p).unwrap();
            for (j, w) in ws.iter().enumerate() {
                let k = j + 1;
                for (m, v) in w.iter().enumerate() {
                    if (m as i64 - n as i64).unsigned_abs() as usize > 4 * k {
                        assert_eq!(*v, 0.0, "n={n} order {k} level {m}");
                    }
                }
                assert_eq!(w[n], 0.0);
            }
        }
    }

    #[test]
    fn certified_mode_rejects_outside_domain() {
        let p = params(1.03);
        let r = gamma_radius(0, &p).unwrap();
        assert!(energy_terms(0, 3, 2.0 * r, 0.0, &p, EvalMode::Certified).is_err());
        assert!(energy_terms(0, 3, 0.1 * r, 0.5, &p, EvalMode::Certified).is_err());
        assert!(energy_terms(0, 3, 2.0 * r, 0.0, &p, EvalMode::Uncertified).is_ok());
        let outside = params(1.07);
        assert!(energy_terms(0, 3, 1e-6, 0.0, &outside, EvalMode::Certified).is_err());
    }

    #[test]
    fn zero_coupling_solve() {
        let p = params(1.03);
        let r = solve_delta_e(0, &p, &SolveOptions::default()).unwrap();
        assert_eq!(r.delta_e, 0.0);
        assert_eq!(r.iterations, 1);
        assert!(r.certified);
        let s = eigenstate_series(0, 0.0, &p, 5).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn solve_small_coupling_is_positive() {
        let p = params(1.03);
        let g = gamma_radius(0, &p).unwrap() / 100.0;
        let r = solve_delta_e(0, &p.with_gamma(g), &SolveOptions::default()).unwrap();
        assert!(r.delta_e > 0.0);
        assert!(r.fixed_point_residual < 1e-9);
    }

    #[test]
    fn solve_refuses_near_radius() {
        let p = params(1.03);
        let g = 0.96 * gamma_radius(0, &p).unwrap();
        assert!(matches!(
            solve_delta_e(0, &p.with_gamma(g), &SolveOptions::default()),
            Err(Error::CouplingOutsideRadius { .. })
        ));
        let p = params(1.06).with_gamma(1e-6);
        assert!(solve_delta_e(0, &p, &SolveOptions::default()).is_err());
    }

    #[test]
    fn majorant_dominates_terms() {
        for (q, n) in [(1.02, 0usize), (1.03, 1), (1.05, 0)] {
            let p = half_radius(q, n);
            let r = solve_delta_e(n, &p, &SolveOptions::default()).unwrap();
            assert!(r.theta < 1.0);
            for t in r.orders.iter().skip(1) {
                let bound = majorant_term(n, t.order, p.gamma().abs(), r.delta_e.abs(), &p).unwrap();
                assert!(t.value.abs() <= bound, "q={q} k={}", t.order);
            }
        }
    }

    #[test]
    fn eigenstate_parity_and_normalization() {
        let p = half_radius(1.03, 1);
        let r = solve_delta_e(1, &p, &SolveOptions::default()).unwrap();
        let s = eigenstate_series(1, r.delta_e, &p, r.max_order).unwrap();
        for (l, v) in s.iter() {
            if v.norm() != 0.0 {
                assert_eq!((l.n - 1).rem_euclid(2), 0);
            }
        }
        assert_eq!(s.get(crate::algebra::Label::new(1, crate::algebra::Sign::Plus)).re, 1.0);
        assert!(s.norm_sq() <= state_norm_bound(1, r.theta));
        assert!(s.norm_sq() > 1.0);
    }

    #[test]
    fn residual_small_and_decreasing_in_order() {
        let p = half_radius(1.03, 0);
        let full = solve_level(0, &p, &SolveOptions::default()).unwrap();
        let rep = certify_eigenpair(&full, 200, &p).unwrap();
        assert!(rep.within_ceiling, "{rep:?}");

        let mut last = f64::INFINITY;
        for k in [4, 8, 12] {
            let opts = SolveOptions::default().with_order(OrderPolicy::Fixed(k));
            let r = solve_level(0, &p, &opts).unwrap();
            let res = r.residual.unwrap();
            assert!(res <= 2.0 * last, "K={k}: {res} vs {last}");
            last = res;
        }
        assert!(certify_eigenpair(&full, 10, &p).is_err());
    }

    #[test]
    fn residual_zero_without_coupling() {
        let p = params(1.03);
        let r = solve_level(2, &p, &SolveOptions::default()).unwrap();
        assert!(r.residual.unwrap() < 1e-15);
    }

    #[test]
    fn parameter_mismatch_rejected() {
        let p = half_radius(1.03, 0);
        let r = solve_delta_e(0, &p, &SolveOptions::default()).unwrap();
        assert_eq!(
            certify_eigenpair(&r, 200, &p.with_gamma(0.0)),
            Err(Error::ParameterMismatch)
        );
    }

    #[test]
    fn complex_terms_are_conjugate_symmetric() {
        let p = params(1.03);
        let r = gamma_radius(0, &p).unwrap();
        let g = Complex64::from_polar(0.5 * r, 0.7);
        let de = Complex64::new(1e-4, -2e-4);
        let a = energy_terms_complex(0, 8, g, de, &p, EvalMode::Certified).unwrap();
        let b = energy_terms_complex(0, 8, g.conj(), de.conj(), &p, EvalMode::Certified).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.conj() - y).norm() <= 1e-15 * x.norm().max(1e-300));
        }
        for (k, t) in a.iter().enumerate().skip(1) {
            let bound = majorant_term(0, k + 1, g.norm(), de.norm(), &p).unwrap();
            assert!(t.norm() <= bound);
        }
        // real axis agrees with the real recursion
        let real = energy_terms(0, 8, 0.5 * r, 1e-4, &p, EvalMode::Certified).unwrap();
        let cplx = energy_terms_complex(
            0,
            8,
            Complex64::new(0.5 * r, 0.0),
            Complex64::new(1e-4, 0.0),
            &p,
            EvalMode::Certified,
        )
        .unwrap();
        for (x, y) in real.iter().zip(&cplx) {
            assert_eq!(*x, y.re);
            assert_eq!(y.im, 0.0);
        }
    }

    #[test]
    fn undeformed_series_diverges() {
        let p = ModelParameters::undeformed(1.0, 1.0, 0.0).unwrap();
        let terms = undeformed_terms(0.1, 25, &p).unwrap();
        let first = terms[0].abs();
        let last = terms[24].abs();
        assert!(last > 1e6 * first);
        assert_eq!(terms[0], 0.1 * 0.75);
        assert!(undeformed_terms(0.1, 5, &params(1.03)).is_err());
        assert!(undeformed_terms(0.0, 10, &p).unwrap().iter().all(|t| *t == 0.0));
    }
}
