use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use super::jacobi::CyclicJacobi;
use crate::error::{Error, Result};

/// Name of the solver used when none is requested.
pub const DEFAULT_SOLVER: &str = "householder-qr";

/// A dense real-symmetric eigensolver. Eigenpairs may come back in any
/// order; eigenvectors are the columns of the returned matrix.
pub trait Eigensolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn eigenvalues(&self, m: DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self.eigen(m)?.0)
    }

    fn eigen(&self, m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)>;
}

/// Householder tridiagonalization followed by implicit QR (nalgebra).
#[derive(Debug, Default, Clone, Copy)]
pub struct HouseholderQr;

impl Eigensolver for HouseholderQr {
    fn name(&self) -> &'static str {
        DEFAULT_SOLVER
    }

    fn eigenvalues(&self, m: DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(m.symmetric_eigenvalues().iter().copied().collect())
    }

    fn eigen(&self, m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let eig = SymmetricEigen::new(m);
        Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
    }
}

pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn Eigensolver>>,
}

impl fmt::Debug for SolverRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.solvers.keys()).finish()
    }
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(HouseholderQr));
        r.register(Box::new(CyclicJacobi::default()));
        r
    }

    /// Replaces any solver registered under the same name.
    pub fn register(&mut self, solver: Box<dyn Eigensolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Eigensolver> {
        self.solvers
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownSolver {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn default_solver(&self) -> Result<&dyn Eigensolver> {
        self.get(DEFAULT_SOLVER)
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
