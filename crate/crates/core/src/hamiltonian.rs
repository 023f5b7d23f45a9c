//! Closed-form matrix elements of X⁴ and H' = ½(X⁴Q̂⁵ + Q̂⁵X⁴), and the
//! truncated banded Hamiltonian `H = H_0 + γH'` on the σ = +1 bounded sector.
//!
//! H' is defined without the coupling; γ enters only through `H_1 = γH'`.

use nalgebra::DMatrix;
use num_traits::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcore::{bracket_kernel, energy_level, n_max, q_power, ModelParameters, Precision};
use crate::scalar::Scalar;

/// Offsets coupled by X⁴ (and by H'), besides their negatives.
pub const BAND_OFFSETS: [usize; 3] = [0, 2, 4];

/// Smallest truncation accepted by [`build_hamiltonian`].
pub const MIN_LEVELS: usize = 5;

fn check_offset(offset: usize) -> Result<()> {
    if BAND_OFFSETS.contains(&offset) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "matrix-element offset must be 0, 2 or 4 (got {offset})"
        )))
    }
}

fn lit<T: Float>(x: f64) -> T {
    T::from(x).expect("literal fits every float type")
}

/// `⟨n+offset|X⁴|n⟩ / (prefactor q^{8n+a})`, with `a = 6, 12, 14` for
/// offsets 0, 2, 4, returned together with `a`.
fn x4_reduced<T: Float>(n: T, offset: usize, ln_q: T) -> (T, f64) {
    let b = |k: f64| bracket_kernel(n + lit(k), lit(2.0), ln_q);
    let qp = |e: f64| (lit::<T>(e) * ln_q).exp();
    match offset {
        0 => {
            let upper = b(1.0) * (b(2.0) + qp(-4.0) * b(1.0) + qp(-8.0) * b(0.0));
            let lower = qp(-8.0) * b(0.0) * (b(1.0) + qp(-4.0) * b(0.0) + qp(-8.0) * b(-1.0));
            (upper + lower, 6.0)
        }
        2 => {
            let s = b(3.0) + qp(-4.0) * b(2.0) + qp(-8.0) * b(1.0) + qp(-12.0) * b(0.0);
            ((b(1.0) * b(2.0)).sqrt() * s, 12.0)
        }
        4 => ((b(1.0) * b(2.0) * b(3.0) * b(4.0)).sqrt(), 14.0),
        _ => unreachable!("offset checked by caller"),
    }
}

/// Generic-precision `⟨n+offset|X⁴|n⟩`. `offset` must be 0, 2 or 4.
pub fn x4_kernel<T: Float>(n: usize, offset: usize, ln_q: T, prefactor: T) -> T {
    let nt = lit::<T>(n as f64);
    let (reduced, a) = x4_reduced(nt, offset, ln_q);
    prefactor * ((lit::<T>(8.0) * nt + lit(a)) * ln_q).exp() * reduced
}

/// Generic-precision `⟨n+offset|H'|n⟩ = ½⟨n+offset|X⁴|n⟩(q^{-10n} + q^{-10(n+offset)})`,
/// evaluated with the q powers combined so it stays finite for large n.
pub fn hprime_kernel<T: Float>(n: usize, offset: usize, ln_q: T, prefactor: T) -> T {
    let nt = lit::<T>(n as f64);
    let (reduced, a) = x4_reduced(nt, offset, ln_q);
    let scale = ((lit::<T>(a) - lit::<T>(2.0) * nt) * ln_q).exp();
    if offset == 0 {
        prefactor * scale * reduced
    } else {
        let damping = lit::<T>(1.0) + (lit::<T>(-10.0 * offset as f64) * ln_q).exp();
        lit::<T>(0.5) * prefactor * damping * scale * reduced
    }
}

/// `⟨n+offset|X⁴|n⟩` including the `(1/2mω)^2` prefactor.
pub fn x4_element(n: usize, offset: usize, params: &ModelParameters) -> Result<f64> {
    check_offset(offset)?;
    Ok(x4_kernel(n, offset, params.ln_q(), params.x4_prefactor()))
}

/// Eigenvalue `q^{-2n·power}` of `Q̂^power` on `|n⟩`.
pub fn qhat_power_eigenvalue(n: usize, power: i32, params: &ModelParameters) -> f64 {
    q_power(-2.0 * n as f64 * power as f64, params)
}

/// `⟨n+offset|H'|n⟩` including the `(1/2mω)^2` prefactor.
pub fn hprime_element(n: usize, offset: usize, params: &ModelParameters) -> Result<f64> {
    check_offset(offset)?;
    Ok(hprime_kernel(n, offset, params.ln_q(), params.x4_prefactor()))
}

/// Default truncation `ceil(4 n_max) + 20`, clamped to `[40, 4000]`.
pub fn default_truncation(params: &ModelParameters) -> usize {
    match n_max(params) {
        Ok(nm) => ((4.0 * nm).ceil() + 20.0).clamp(40.0, 4000.0) as usize,
        Err(_) => 4000,
    }
}

/// Real symmetric matrix whose only nonzero offsets are 0, ±2, ±4.
/// The lower band shares storage with the upper one.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedHermitianMatrix {
    diag: Vec<f64>,
    off2: Vec<f64>,
    off4: Vec<f64>,
    params: ModelParameters,
}

impl BandedHermitianMatrix {
    /// `diag.len() = N`, `off2.len() = N - 2`, `off4.len() = N - 4`.
    pub fn from_bands(
        diag: Vec<f64>,
        off2: Vec<f64>,
        off4: Vec<f64>,
        params: ModelParameters,
    ) -> Result<Self> {
        let n = diag.len();
        if n < MIN_LEVELS {
            return Err(Error::TruncationTooSmall {
                levels: n,
                required: MIN_LEVELS,
            });
        }
        if off2.len() != n - 2 || off4.len() != n - 4 {
            return Err(Error::InvalidParameter(format!(
                "band lengths {}, {} do not match dimension {n}",
                off2.len(),
                off4.len()
            )));
        }
        Ok(Self {
            diag,
            off2,
            off4,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    /// Entries `(k, k + offset)` for `offset` in {0, 2, 4}.
    pub fn band(&self, offset: usize) -> &[f64] {
        match offset {
            0 => &self.diag,
            2 => &self.off2,
            4 => &self.off4,
            _ => &[],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi >= self.dim() {
            return 0.0;
        }
        match hi - lo {
            0 => self.diag[lo],
            2 => self.off2[lo],
            4 => self.off4[lo],
            _ => 0.0,
        }
    }

    /// Leading principal `levels × levels` block; equals the Hamiltonian
    /// built directly at that truncation.
    pub fn leading(&self, levels: usize) -> Result<Self> {
        if levels > self.dim() {
            return Err(Error::InvalidParameter(format!(
                "cannot take a {levels}-level block of a {}-level matrix",
                self.dim()
            )));
        }
        Self::from_bands(
            self.diag[..levels].to_vec(),
            self.off2[..levels.saturating_sub(2)].to_vec(),
            self.off4[..levels.saturating_sub(4)].to_vec(),
            self.params,
        )
    }

    pub fn matvec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n, "vector length must match the matrix dimension");
        let mut y: Vec<T> = (0..n).map(|i| x[i] * self.diag[i]).collect();
        for (offset, band) in [(2usize, &self.off2), (4, &self.off4)] {
            for (k, &h) in band.iter().enumerate() {
                y[k] += x[k + offset] * h;
                y[k + offset] += x[k] * h;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm.
    pub fn infinity_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                [0i64, 2, -2, 4, -4]
                    .iter()
                    .filter_map(|&d| {
                        let j = i as i64 + d;
                        (j >= 0).then(|| self.get(i, j as usize).abs())
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest number of structurally nonzero entries in any row.
    pub fn max_row_nonzeros(&self) -> usize {
        (0..self.dim())
            .map(|i| {
                [0i64, 2, -2, 4, -4]
                    .iter()
                    .filter(|&&d| {
                        let j = i as i64 + d;
                        j >= 0 && (j as usize) < self.dim()
                    })
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    /// Location of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        for (offset, band) in [(0usize, &self.diag), (2, &self.off2), (4, &self.off4)] {
            if let Some(k) = band.iter().position(|v| !v.is_finite()) {
                return Some((k, k + offset));
            }
        }
        None
    }
}

/// Matrix of H' alone (no H_0, no γ) truncated to `levels`.
pub fn build_hprime(levels: usize, params: &ModelParameters) -> Result<BandedHermitianMatrix> {
    build_scaled(levels, params, false, 1.0)
}

/// `H_0 + γH'` truncated to levels `0..levels`.
pub fn build_hamiltonian(levels: usize, params: &ModelParameters) -> Result<BandedHermitianMatrix> {
    build_scaled(levels, params, true, params.gamma())
}

fn build_scaled(
    levels: usize,
    params: &ModelParameters,
    with_h0: bool,
    coupling: f64,
) -> Result<BandedHermitianMatrix> {
    if levels < MIN_LEVELS {
        return Err(Error::TruncationTooSmall {
            levels,
            required: MIN_LEVELS,
        });
    }
    let ln_q = params.ln_q();
    let pre = params.x4_prefactor();
    let diag = (0..levels)
        .map(|n| {
            let h0 = if with_h0 { energy_level(n, params) } else { 0.0 };
            h0 + coupling * hprime_kernel(n, 0, ln_q, pre)
        })
        .collect();
    let off2 = (0..levels - 2)
        .map(|n| coupling * hprime_kernel(n, 2, ln_q, pre))
        .collect();
    let off4 = (0..levels - 4)
        .map(|n| coupling * hprime_kernel(n, 4, ln_q, pre))
        .collect();
    BandedHermitianMatrix::from_bands(diag, off2, off4, *params)
}

fn extended_table(levels: &[usize], params: &ModelParameters) -> Vec<MatrixElementRow> {
    use num_traits::ToPrimitive;
    use twofloat::TwoFloat;

    let ln_q = if params.is_undeformed() {
        TwoFloat::from(0.0)
    } else {
        TwoFloat::from(params.q()).ln()
    };
    let two_m_omega = TwoFloat::from(2.0) * TwoFloat::from(params.mass()) * TwoFloat::from(params.omega());
    let pre = TwoFloat::from(1.0) / (two_m_omega * two_m_omega);
    let f = |x: TwoFloat| x.to_f64().unwrap_or(f64::NAN);
    levels
        .iter()
        .flat_map(|&n| {
            BAND_OFFSETS.iter().map(move |&offset| MatrixElementRow {
                n,
                offset,
                x4: f(x4_kernel(n, offset, ln_q, pre)),
                hprime: f(hprime_kernel(n, offset, ln_q, pre)),
            })
        })
        .collect()
}

/// [`matrix_element_table`] evaluated at the requested precision; the
/// extended path runs the kernels in double-double and rounds once.
pub fn matrix_element_table_with(
    levels: impl IntoIterator<Item = usize>,
    params: &ModelParameters,
    precision: Precision,
) -> Vec<MatrixElementRow> {
    match precision {
        Precision::Double => matrix_element_table(levels, params),
        Precision::Extended => extended_table(&levels.into_iter().collect::<Vec<_>>(), params),
    }
}

/// `⟨n|H'|n⟩` for each requested level.
pub fn hprime_diagonal(
    levels: impl IntoIterator<Item = usize>,
    params: &ModelParameters,
    precision: Precision,
) -> Vec<f64> {
    matrix_element_table_with(levels, params, precision)
        .into_iter()
        .filter(|r| r.offset == 0)
        .map(|r| r.hprime)
        .collect()
}

/// One row of the matrix-element dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixElementRow {
    pub n: usize,
    pub offset: usize,
    pub x4: f64,
    pub hprime: f64,
}

/// Rows for levels `levels`, ordered by n then offset.
pub fn matrix_element_table(
    levels: impl IntoIterator<Item = usize>,
    params: &ModelParameters,
) -> Vec<MatrixElementRow> {
    let ln_q = params.ln_q();
    let pre = params.x4_prefactor();
    levels
        .into_iter()
        .flat_map(|n| {
            BAND_OFFSETS.iter().map(move |&offset| MatrixElementRow {
                n,
                offset,
                x4: x4_kernel(n, offset, ln_q, pre),
                hprime: hprime_kernel(n, offset, ln_q, pre),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{hermite_apply_x, BasisKind, Label, Sign, StateVector};
    use crate::qcore::bracket;

    fn params(q: f64) -> ModelParameters {
        ModelParameters::with_q(q).unwrap()
    }

    fn undeformed() -> ModelParameters {
        ModelParameters::undeformed(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn undeformed_limits() {
        let p = undeformed();
        assert_eq!(x4_element(0, 0, &p).unwrap(), 0.75);
        assert!((x4_element(0, 4, &p).unwrap() - 24f64.sqrt() / 4.0).abs() < 1e-15);
        for n in 0..=10usize {
            let expected = 3.0 * (2 * n * n + 2 * n + 1) as f64 / 4.0;
            let v = x4_element(n, 0, &p).unwrap();
            assert!((v - expected).abs() <= 1e-12 * expected);
            assert_eq!(hprime_element(n, 0, &p).unwrap(), v);
        }
    }

    #[test]
    fn offsets_are_validated() {
        let p = params(1.03);
        assert!(x4_element(3, 1, &p).is_err());
        assert!(hprime_element(3, 6, &p).is_err());
    }

    #[test]
    fn matches_fock_recursion() {
        // four-fold application of the Hermite recursion is an independent route
        for &q in &[1.02, 1.05] {
            let p = params(q);
            for n in 0..12usize {
                let mut v = StateVector::basis(BasisKind::Fock, Label::new(n as i64, Sign::Plus)).unwrap();
                for _ in 0..4 {
                    v = hermite_apply_x(&v, &p).unwrap();
                }
                for offset in BAND_OFFSETS {
                    let via_recursion = v.get(Label::new((n + offset) as i64, Sign::Plus)).re;
                    let closed = x4_element(n, offset, &p).unwrap();
                    assert!(
                        (via_recursion - closed).abs() <= 1e-12 * closed,
                        "q={q} n={n} offset={offset}"
                    );
                }
            }
        }
    }

    #[test]
    fn qhat_eigenvalues() {
        let p = params(1.1);
        assert_eq!(qhat_power_eigenvalue(0, 5, &p), 1.0);
        assert!((qhat_power_eigenvalue(1, 1, &p) - 1.1f64.powi(-2)).abs() < 1e-15);
        let p = params(1.02);
        assert!((qhat_power_eigenvalue(2, 5, &p) - 1.02f64.powi(-20)).abs() < 1e-15);
    }

    #[test]
    fn hprime_definition() {
        let p = params(1.03);
        for n in 0..20usize {
            for offset in BAND_OFFSETS {
                let direct = 0.5
                    * x4_element(n, offset, &p).unwrap()
                    * (qhat_power_eigenvalue(n, 5, &p) + qhat_power_eigenvalue(n + offset, 5, &p));
                let v = hprime_element(n, offset, &p).unwrap();
                assert!((v - direct).abs() <= 1e-13 * direct);
            }
        }
    }

    #[test]
    fn hprime_offset_four_at_zero() {
        let p = params(1.03);
        let q: f64 = 1.03;
        let b = |k| bracket(k, &p);
        let expected = 0.5 * (1.0 + q.powi(-40)) * q.powi(14) * (b(1) * b(2) * b(3) * b(4)).sqrt() / 4.0;
        let v = hprime_element(0, 4, &p).unwrap();
        assert!((v - expected).abs() <= 1e-14 * expected);
    }

    #[test]
    fn positivity() {
        for &q in &[1.001, 1.02, 1.05] {
            let p = params(q);
            for n in 0..500 {
                for offset in BAND_OFFSETS {
                    assert!(hprime_element(n, offset, &p).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn hprime_finite_for_large_levels() {
        let p = params(1.05);
        for offset in BAND_OFFSETS {
            let v = hprime_element(4000, offset, &p).unwrap();
            assert!(v.is_finite() && v >= 0.0);
        }
    }

    #[test]
    fn build_structure() {
        let p = params(1.03).with_gamma(0.01);
        let h = build_hamiltonian(40, &p).unwrap();
        assert_eq!(h.dim(), 40);
        assert_eq!(h.get(4, 0), h.get(0, 4));
        assert_eq!(h.get(0, 1), 0.0);
        assert_eq!(h.get(0, 3), 0.0);
        assert_eq!(h.max_row_nonzeros(), 5);
        assert_eq!(h, build_hamiltonian(40, &p).unwrap());
        assert_eq!(h.leading(20).unwrap(), build_hamiltonian(20, &p).unwrap());
        let diag0 = energy_level(7, &p) + 0.01 * hprime_element(7, 0, &p).unwrap();
        assert_eq!(h.get(7, 7), diag0);
        assert!(build_hamiltonian(4, &p).is_err());
    }

    #[test]
    fn zero_coupling_is_diagonal() {
        let p = params(1.03);
        let h = build_hamiltonian(30, &p).unwrap();
        for i in 0..30 {
            assert_eq!(h.get(i, i), energy_level(i, &p));
        }
        assert!(h.band(2).iter().chain(h.band(4)).all(|v| *v == 0.0));
    }

    #[test]
    fn matvec_matches_dense() {
        let p = params(1.04).with_gamma(0.3);
        let h = build_hamiltonian(25, &p).unwrap();
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = h.matvec(&x);
        let dense = h.to_dense() * nalgebra::DVector::from_vec(x);
        for i in 0..25 {
            assert!((y[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn default_truncation_policy() {
        assert_eq!(default_truncation(&params(1.5)), 40);
        let p = params(1.02);
        let expected = (4.0 * n_max(&p).unwrap()).ceil() as usize + 20;
        assert_eq!(default_truncation(&p), expected);
        assert_eq!(default_truncation(&params(1.0001)), 4000);
    }

    #[test]
    fn table_order() {
        let rows = matrix_element_table(0..3, &params(1.03));
        let keys: Vec<_> = rows.iter().map(|r| (r.n, r.offset)).collect();
        assert_eq!(keys, vec![(0, 0), (0, 2), (0, 4), (1, 0), (1, 2), (1, 4), (2, 0), (2, 2), (2, 4)]);
    }

    #[test]
    fn extended_table_matches_double() {
        for q in [1.001, 1.03] {
            let p = ModelParameters::with_q(q).unwrap();
            let a = matrix_element_table(0..600, &p);
            let b = matrix_element_table_with(0..600, &p, Precision::Extended);
            for (x, y) in a.iter().zip(&b) {
                assert_eq!((x.n, x.offset), (y.n, y.offset));
                assert!((x.x4 - y.x4).abs() <= 1e-10 * y.x4.abs());
                assert!((x.hprime - y.hprime).abs() <= 1e-10 * y.hprime.abs());
            }
        }
        let p = ModelParameters::with_q(1.001).unwrap();
        let d = hprime_diagonal(0..1000, &p, Precision::Extended);
        let peak = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, 549);
    }
}
