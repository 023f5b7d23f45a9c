//! Dense diagonalization of the truncated Hamiltonian, used as ground truth
//! for the perturbative results.

mod jacobi;
mod registry;

pub use jacobi::CyclicJacobi;
pub use registry::{Eigensolver, HouseholderQr, SolverRegistry, DEFAULT_SOLVER};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bounds::{c_bound, gamma_radius};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_hamiltonian, default_truncation, BandedHermitianMatrix, MIN_LEVELS};
use crate::perturbation::PerturbationResult;
use crate::qcore::{e_infinity, n_max, ModelParameters};

/// Per-pair residual ceiling, relative to `‖H‖_∞`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Largest truncation a scan will try.
pub const SCAN_CAP: usize = 8000;

/// Second-nearest eigenvalue must be at least this many times farther
/// than the nearest.
pub const MATCH_SEPARATION: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpectrum {
    pub levels: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column i belongs to `eigenvalues[i]`.
    pub eigenvectors: Option<DMatrix<f64>>,
    /// `|λ_i(N) - λ_i(N/2)|`; infinite where the half-size run has no
    /// i-th eigenvalue.
    pub stability: Vec<f64>,
    pub params: ModelParameters,
    pub solver: &'static str,
}

impl OracleSpectrum {
    pub fn eigenvector(&self, i: usize) -> Option<DVector<f64>> {
        self.eigenvectors.as_ref().map(|v| v.column(i).into_owned())
    }
}

fn sorted_pairs(values: Vec<f64>, vectors: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let cols: Vec<_> = order.iter().map(|&i| vectors.column(i).into_owned()).collect();
    (sorted, DMatrix::from_columns(&cols))
}

fn sorted_values(h: &BandedHermitianMatrix, solver: &dyn Eigensolver) -> Result<Vec<f64>> {
    let mut v = solver.eigenvalues(h.to_dense())?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Full eigendecomposition with a residual check on every pair and a
/// stability estimate from the leading half-size block.
pub fn diagonalize(h: &BandedHermitianMatrix, solver: &dyn Eigensolver) -> Result<OracleSpectrum> {
    if let Some((row, col)) = h.first_non_finite() {
        return Err(Error::NonFiniteMatrix { row, col });
    }
    let levels = h.dim();
    let (values, vectors) = solver.eigen(h.to_dense())?;
    let (eigenvalues, eigenvectors) = sorted_pairs(values, vectors);

    let limit = RESIDUAL_TOLERANCE * h.infinity_norm().max(f64::MIN_POSITIVE);
    for (i, &lambda) in eigenvalues.iter().enumerate() {
        let v: Vec<f64> = eigenvectors.column(i).iter().copied().collect();
        let hv = h.matvec(&v);
        let residual = hv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if !(residual <= limit) {
            return Err(Error::EigenResidual {
                index: i,
                residual,
                limit,
            });
        }
    }

    let half = levels / 2;
    let mut stability = vec![f64::INFINITY; levels];
    if half >= MIN_LEVELS {
        let coarse = sorted_values(&h.leading(half)?, solver)?;
        for (s, (a, b)) in stability.iter_mut().zip(eigenvalues.iter().zip(&coarse)) {
            *s = (a - b).abs();
        }
    }

    Ok(OracleSpectrum {
        levels,
        eigenvalues,
        eigenvectors: Some(eigenvectors),
        stability,
        params: *h.params(),
        solver: solver.name(),
    })
}

/// Doubles N from the default truncation until eigenvalue `n_target`
/// moves by less than `tolerance` between N/2 and N.
pub fn truncation_scan(
    params: &ModelParameters,
    n_target: usize,
    tolerance: f64,
    solver: &dyn Eigensolver,
) -> Result<OracleSpectrum> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be > 0 (got {tolerance})"
        )));
    }
    let mut levels = default_truncation(params).max(2 * (n_target + 1)).max(2 * MIN_LEVELS);
    loop {
        let spectrum = diagonalize(&build_hamiltonian(levels, params)?, solver)?;
        let change = spectrum.stability[n_target];
        if change < tolerance {
            return Ok(spectrum);
        }
        if levels >= SCAN_CAP {
            return Err(Error::NoStability {
                target: n_target,
                levels,
                change,
            });
        }
        levels = (2 * levels).min(SCAN_CAP);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Uncertified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub params: ModelParameters,
    pub n: usize,
    pub perturbative_energy: f64,
    pub oracle_energy: f64,
    pub oracle_index: usize,
    pub difference: f64,
    pub tail_bound: f64,
    pub stability: f64,
    pub verdict: Verdict,
    /// `|⟨oracle vector | normalized series state⟩|` when the state is known.
    pub overlap: Option<f64>,
    pub gamma_radius: Option<f64>,
    pub c_bound: Option<f64>,
    pub n_max: Option<f64>,
}

/// Matches the series energy to the nearest admissible oracle eigenvalue.
pub fn compare(pert: &PerturbationResult, oracle: &OracleSpectrum) -> Result<ConvergenceReport> {
    if !pert.params.same_physics(&oracle.params) {
        return Err(Error::ParameterMismatch);
    }
    let energy = pert.energy();
    // levels near the accumulation point are truncation artifacts
    let ceiling = e_infinity(&oracle.params).unwrap_or(f64::INFINITY);
    let admissible = |i: usize| oracle.eigenvalues[i] < ceiling - 10.0 * oracle.stability[i];

    let mut by_distance: Vec<(f64, usize)> = (0..oracle.levels)
        .map(|i| ((oracle.eigenvalues[i] - energy).abs(), i))
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nearest, index) = by_distance[0];
    let second = by_distance.get(1).map(|d| d.0).unwrap_or(f64::INFINITY);
    if !admissible(index) || !(second >= MATCH_SEPARATION * nearest) || second == 0.0 {
        return Err(Error::AmbiguousMatch {
            energy,
            nearest,
            second,
        });
    }

    let stability = oracle.stability[index];
    let difference = nearest;
    let omega = oracle.params.omega();
    let verdict = if !pert.certified {
        Verdict::Uncertified
    } else if difference <= pert.tail_bound + stability + 1e-9 * omega {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let overlap = match (&pert.state, oracle.eigenvector(index)) {
        (Some(state), Some(vec)) => {
            let dense = state.fock_dense(oracle.levels.max(state.support().map_or(0, |s| s.1 as usize + 1)))?;
            let norm = state.norm();
            let dot: f64 = vec.iter().zip(&dense).map(|(a, b)| a * b.re).sum();
            Some((dot / norm).abs())
        }
        _ => None,
    };

    let p = &oracle.params;
    Ok(ConvergenceReport {
        params: *p,
        n: pert.n,
        perturbative_energy: energy,
        oracle_energy: oracle.eigenvalues[index],
        oracle_index: index,
        difference,
        tail_bound: pert.tail_bound,
        stability,
        verdict,
        overlap,
        gamma_radius: gamma_radius(pert.n, p).ok(),
        c_bound: c_bound(p).ok(),
        n_max: n_max(p).ok(),
    })
}
