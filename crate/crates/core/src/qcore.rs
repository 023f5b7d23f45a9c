//! q-number arithmetic and the model parameter record.
//!
//! Every bracket is evaluated as a ratio of `exp_m1` values, which keeps
//! full relative precision as q approaches 1 where the textbook form
//! `(1 - q^{-ni}) / (1 - q^{-i})` cancels catastrophically.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the q window in which the matrix-element estimates hold.
pub const Q_WINDOW_UPPER: f64 = 1.06;

/// Below this value of `q - 1` the extended-precision path is selected
/// automatically.
pub const EXTENDED_PRECISION_THRESHOLD: f64 = 1e-4;

/// Physical parameters of the oscillator, with ħ = 1.
///
/// `gamma` is the (real) anharmonic coupling. Complex couplings are
/// passed explicitly to the perturbation routines that accept them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    q: f64,
    omega: f64,
    mass: f64,
    gamma: f64,
    undeformed: bool,
    window_override: bool,
}

impl ModelParameters {
    /// Deformed oscillator. Requires `q > 1`, `omega > 0`, `mass > 0`.
    pub fn new(q: f64, omega: f64, mass: f64, gamma: f64) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "q must be finite and > 1 (got {q}); use ModelParameters::undeformed for q = 1"
            )));
        }
        Self::check_common(omega, mass, gamma)?;
        Ok(Self {
            q,
            omega,
            mass,
            gamma,
            undeformed: false,
            window_override: false,
        })
    }

    /// Deformed oscillator with the default units `omega = mass = 1`.
    pub fn with_q(q: f64) -> Result<Self> {
        Self::new(q, 1.0, 1.0, 0.0)
    }

    /// The q = 1 limit, where `[n]_i = n`. Only the plain oscillator and the
    /// divergence demonstration are meaningful here; all bound formulas
    /// refuse these parameters.
    pub fn undeformed(omega: f64, mass: f64, gamma: f64) -> Result<Self> {
        Self::check_common(omega, mass, gamma)?;
        Ok(Self {
            q: 1.0,
            omega,
            mass,
            gamma,
            undeformed: true,
            window_override: false,
        })
    }

    fn check_common(omega: f64, mass: f64, gamma: f64) -> Result<()> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be > 0 (got {omega})"
            )));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be > 0 (got {mass})"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite (got {gamma})"
            )));
        }
        Ok(())
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        assert!(gamma.is_finite(), "gamma must be finite");
        self.gamma = gamma;
        self
    }

    /// Lets bound formulas run for `q >= 1.06`. Results computed this way
    /// are reported as uncertified.
    pub fn allow_outside_window(mut self) -> Self {
        self.window_override = true;
        self
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_undeformed(&self) -> bool {
        self.undeformed
    }

    pub fn window_override(&self) -> bool {
        self.window_override
    }

    /// `ln q`, exactly zero in the undeformed mode.
    pub fn ln_q(&self) -> f64 {
        if self.undeformed {
            0.0
        } else {
            self.q.ln()
        }
    }

    /// `(1 / 2mω)^2`, the prefactor carried by every X⁴ matrix element.
    pub fn x4_prefactor(&self) -> f64 {
        let two_m_omega = 2.0 * self.mass * self.omega;
        1.0 / (two_m_omega * two_m_omega)
    }

    /// True when q lies strictly inside (1, 1.06).
    pub fn in_certified_window(&self) -> bool {
        !self.undeformed && self.q > 1.0 && self.q < Q_WINDOW_UPPER
    }

    pub(crate) fn require_deformed(&self) -> Result<()> {
        if self.undeformed {
            Err(Error::Undeformed { q: self.q })
        } else {
            Ok(())
        }
    }

    /// Guard for every estimate that is only claimed for 1 < q < 1.06.
    pub(crate) fn require_window(&self) -> Result<()> {
        self.require_deformed()?;
        if self.q >= Q_WINDOW_UPPER && !self.window_override {
            return Err(Error::OutsideWindow {
                q: self.q,
                limit: Q_WINDOW_UPPER,
            });
        }
        Ok(())
    }

    /// Same physical parameters, compared bit for bit.
    pub fn same_physics(&self, other: &Self) -> bool {
        self.q.to_bits() == other.q.to_bits()
            && self.omega.to_bits() == other.omega.to_bits()
            && self.mass.to_bits() == other.mass.to_bits()
            && self.gamma.to_bits() == other.gamma.to_bits()
            && self.undeformed == other.undeformed
    }
}

/// Floating-point width used by the precision-sensitive kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Double,
    /// Double-double (~106 bit mantissa).
    Extended,
}

impl Precision {
    /// Extended precision for `q - 1 < 1e-4`, double otherwise.
    pub fn auto(q: f64) -> Self {
        if q - 1.0 < EXTENDED_PRECISION_THRESHOLD {
            Precision::Extended
        } else {
            Precision::Double
        }
    }
}

/// `[x]_i` for real `x` and base `i`, with `[x]_i = x` when `ln_q == 0`.
pub fn bracket_kernel<T: Float>(x: T, base: T, ln_q: T) -> T {
    if ln_q == T::zero() {
        return x;
    }
    (-(x * base * ln_q)).exp_m1() / (-(base * ln_q)).exp_m1()
}

/// `q^e` from `ln q`.
pub fn q_power_kernel<T: Float>(exponent: T, ln_q: T) -> T {
    (exponent * ln_q).exp()
}

/// q-bracket `[n]_i = (1 - q^{-ni}) / (1 - q^{-i})`.
pub fn q_bracket(n: i64, i: i64, params: &ModelParameters) -> Result<f64> {
    if n < 0 {
        return Err(Error::InvalidParameter(format!(
            "bracket argument must be >= 0 (got {n})"
        )));
    }
    if i <= 0 {
        return Err(Error::InvalidParameter(format!(
            "bracket base must be positive (got {i})"
        )));
    }
    Ok(bracket_kernel(n as f64, i as f64, params.ln_q()))
}

/// `[x]_i` for real (possibly negative or fractional) `x`.
pub fn q_bracket_real(x: f64, i: f64, params: &ModelParameters) -> f64 {
    bracket_kernel(x, i, params.ln_q())
}

/// `[n] = [n]_2`, the bracket that labels the spectrum.
pub fn bracket(n: usize, params: &ModelParameters) -> f64 {
    bracket_kernel(n as f64, 2.0, params.ln_q())
}

/// `q^e`.
pub fn q_power(exponent: f64, params: &ModelParameters) -> f64 {
    q_power_kernel(exponent, params.ln_q())
}

/// Unperturbed level `E_n = ω [n]`.
pub fn energy_level(n: usize, params: &ModelParameters) -> f64 {
    params.omega * bracket(n, params)
}

/// `E_n - E_m`, evaluated as `ω q^{-2 min(n,m)} [|n - m|]` with the sign of
/// `n - m`. Exactly antisymmetric.
pub fn energy_gap(n: usize, m: usize, params: &ModelParameters) -> f64 {
    if n == m {
        return 0.0;
    }
    let (lo, hi) = if n < m { (n, m) } else { (m, n) };
    let magnitude = params.omega * q_power(-2.0 * lo as f64, params) * bracket(hi - lo, params);
    if n > m {
        magnitude
    } else {
        -magnitude
    }
}

/// Accumulation point `E_∞ = ω / (1 - q^{-2})` of the bounded spectrum.
pub fn e_infinity(params: &ModelParameters) -> Result<f64> {
    params.require_deformed()?;
    Ok(-params.omega / (-2.0 * params.ln_q()).exp_m1())
}

/// `ln 3 / (2 ln q)`, where `x ↦ q^{-2x}[x]^2` peaks.
pub fn n_max(params: &ModelParameters) -> Result<f64> {
    params.require_deformed()?;
    Ok(3f64.ln() / (2.0 * params.ln_q()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use twofloat::TwoFloat;

    fn params(q: f64) -> ModelParameters {
        ModelParameters::with_q(q).unwrap()
    }

    /// Geometric sum Σ_{j<n} q^{-ij} in double-double; independent of the
    /// expm1 route.
    fn bracket_oracle(n: u32, i: u32, q: f64) -> f64 {
        let inv = TwoFloat::from(1.0) / TwoFloat::from(q);
        let step = num_traits::Float::powi(inv, i as i32);
        let mut term = TwoFloat::from(1.0);
        let mut sum = TwoFloat::from(0.0);
        for _ in 0..n {
            sum += term;
            term *= step;
        }
        f64::from(sum)
    }

    #[test]
    fn bracket_trivial_values() {
        let p = params(1.05);
        assert_eq!(q_bracket(0, 2, &p).unwrap(), 0.0);
        assert_eq!(q_bracket(1, 2, &p).unwrap(), 1.0);
        assert_eq!(q_bracket(1, 8, &p).unwrap(), 1.0);
    }

    #[test]
    fn bracket_rejects_bad_arguments() {
        let p = params(1.05);
        assert!(q_bracket(-1, 2, &p).is_err());
        assert!(q_bracket(3, 0, &p).is_err());
        assert!(q_bracket(3, -2, &p).is_err());
    }

    #[test]
    fn bracket_three_matches_high_precision() {
        let p = params(1.05);
        let v = q_bracket(3, 2, &p).unwrap();
        // 40-digit evaluation of (1 - 1.05^-6) / (1 - 1.05^-2)
        let frozen = 2.729_731_953_249_931_9;
        assert!((v - frozen).abs() <= 1e-14 * frozen);
        let oracle = bracket_oracle(3, 2, 1.05);
        assert!((v - oracle).abs() <= 1e-15 * oracle);
    }

    #[test]
    fn bracket_matches_geometric_sum() {
        for &q in &[1.001, 1.02, 1.05, 1.3] {
            let p = params(q);
            for i in [1u32, 2, 4, 8] {
                for n in [2u32, 5, 17, 60, 200] {
                    let v = q_bracket(n as i64, i as i64, &p).unwrap();
                    let o = bracket_oracle(n, i, q);
                    assert!((v - o).abs() <= 1e-13 * o, "q={q} i={i} n={n}: {v} vs {o}");
                }
            }
        }
    }

    #[test]
    fn energy_level_values() {
        let p = params(1.02);
        assert_eq!(energy_level(0, &p), 0.0);
        assert_eq!(energy_level(1, &p), 1.0);
        let frozen = 8.421_797_649_365_762;
        let e10 = energy_level(10, &p);
        assert!((e10 - frozen).abs() <= 1e-13 * frozen);
        assert!((e10 - bracket_oracle(10, 2, 1.02)).abs() <= 1e-14 * frozen);
    }

    #[test]
    fn energy_gap_matches_level_difference() {
        let p = params(1.03);
        let gap = energy_gap(7, 5, &p);
        let diff = energy_level(7, &p) - energy_level(5, &p);
        assert!((gap - diff).abs() <= 1e-13 * diff.abs());
        let frozen = 1.445_473_795_089_698_2;
        assert!((gap - frozen).abs() <= 1e-13 * frozen);
        assert_eq!(energy_gap(4, 4, &p), 0.0);
        assert!((energy_gap(2, 0, &p) - bracket(2, &p)).abs() < 1e-15);
    }

    #[test]
    fn energy_gap_is_antisymmetric() {
        let p = params(1.017);
        for n in 0..40 {
            for m in 0..40 {
                assert_eq!(energy_gap(n, m, &p), -energy_gap(m, n, &p));
            }
        }
    }

    #[test]
    fn n_max_values() {
        let v = n_max(&params(1.06)).unwrap();
        assert!((v - 9.427_088_339_553_648).abs() < 1e-12);
        let v = n_max(&params(3f64.sqrt())).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!(n_max(&ModelParameters::undeformed(1.0, 1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn peak_value_at_n_max() {
        // u(1-u)^2 with u = q^{-2x} peaks at u = 1/3 with value 4/27
        let p = params(1.02);
        let x = n_max(&p).unwrap();
        let value = q_power(-2.0 * x, &p) * q_bracket_real(x, 2.0, &p).powi(2);
        let denom = (1.0 - p.q().powi(-2)).powi(2);
        let expected = 4.0 / (27.0 * denom);
        assert!((value - expected).abs() <= 1e-12 * expected);
        // it is a maximum
        for dx in [-1.0, -0.1, 0.1, 1.0] {
            let y = x + dx;
            assert!(q_power(-2.0 * y, &p) * q_bracket_real(y, 2.0, &p).powi(2) < value);
        }
    }

    #[test]
    fn accumulation_toward_e_infinity() {
        let p = params(1.05);
        let e_inf = e_infinity(&p).unwrap();
        let nm = n_max(&p).unwrap();
        for n in 0..(10.0 * nm) as usize {
            assert!(energy_level(n, &p) < e_inf);
        }
        let far = energy_level(10_000, &p);
        assert!((e_inf - far).abs() <= 1e-8 * e_inf);
    }

    #[test]
    fn monotone_up_to_ten_n_max() {
        let p = params(1.04);
        let top = (10.0 * n_max(&p).unwrap()) as usize;
        for n in 0..top {
            assert!(bracket(n, &p) < bracket(n + 1, &p));
        }
    }

    #[test]
    fn stable_near_one() {
        let p = params(1.0 + 1e-8);
        let v = q_bracket(5, 2, &p).unwrap();
        assert!((v - 5.0).abs() <= 1e-6 * 5.0);
        let v = q_bracket(5, 8, &p).unwrap();
        assert!((v - 5.0).abs() <= 1e-6 * 5.0);
    }

    #[test]
    fn undeformed_limit_is_integer() {
        let p = ModelParameters::undeformed(2.0, 1.0, 0.0).unwrap();
        assert_eq!(q_bracket(7, 4, &p).unwrap(), 7.0);
        assert_eq!(energy_level(3, &p), 6.0);
        assert_eq!(energy_gap(2, 5, &p), -6.0);
        assert!(e_infinity(&p).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParameters::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParameters::new(0.9, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParameters::new(1.02, 0.0, 1.0, 0.0).is_err());
        assert!(ModelParameters::new(1.02, 1.0, -1.0, 0.0).is_err());
        assert!(ModelParameters::new(1.02, 1.0, 1.0, f64::NAN).is_err());
        let p = ModelParameters::with_q(1.07).unwrap();
        assert!(p.require_window().is_err());
        assert!(p.allow_outside_window().require_window().is_ok());
    }

    #[test]
    fn precision_policy() {
        assert_eq!(Precision::auto(1.00005), Precision::Extended);
        assert_eq!(Precision::auto(1.001), Precision::Double);
    }

    #[test]
    fn extended_kernel_agrees_with_double() {
        let ln_q = TwoFloat::from(1.001f64).ln();
        for n in [3.0, 50.0, 549.0] {
            let ext = bracket_kernel(TwoFloat::from(n), TwoFloat::from(2.0), ln_q);
            let dbl = bracket_kernel(n, 2.0, 1.001f64.ln());
            assert!((f64::from(ext) - dbl).abs() <= 1e-13 * dbl);
        }
    }
}
