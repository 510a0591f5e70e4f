//! Constrained energy and free-energy minimization for small quantum
//! thermodynamic systems.
//!
//! A [`models::ThermoSystem`] bundles a Hamiltonian `H`, charges `Q_i` and
//! target expectations `q_i`. The constrained minimum of `Tr[Hρ] − T·S(ρ)` is
//! found by maximizing the concave dual
//! `f(μ) = μ·q − T ln Tr[exp(−(H − μ·Q)/T)]` over chemical potentials `μ`,
//! with exact expectations ([`gibbs`]) or simulated measurement shots
//! ([`shots`]). The [`oracle`] module provides an independent reference by
//! maximizing `μ·q + λ_min(H − μ·Q)` directly.

pub mod encoding;
pub mod error;
pub mod gibbs;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod optimize;
pub mod oracle;
pub mod random;
pub mod shots;

pub use error::{Error, Result};
pub use gibbs::ThermalState;
pub use linalg::{CMatrix, SpectralDecomposition};
pub use models::{StabilizerCode, ThermoSystem};
pub use operators::{Observable, Pauli, PauliString, Phase};
