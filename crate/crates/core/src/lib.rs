//! Numerics for the q-deformed anharmonic oscillator `H = H_0 + γ H'`.
//!
//! * [`qcore`]: q-brackets, unperturbed levels and model parameters.
//! * [`algebra`]: momentum-space representation, ladder operators, Fock states.
//! * [`hamiltonian`]: closed-form X⁴ / H' matrix elements and the banded Hamiltonian.
//! * [`perturbation`]: Rayleigh–Schrödinger series with a self-consistent energy shift.
//! * [`bounds`]: element bounds, C(q), majorants, the convergence radius.
//! * [`oracle`]: independent diagonalization and comparison reports.

pub mod algebra;
pub mod bounds;
pub mod error;
pub mod hamiltonian;
pub mod oracle;
pub mod perturbation;
pub mod qcore;
pub mod scalar;

pub use error::{Error, ErrorClass, Result};
pub use qcore::{ModelParameters, Precision};
