//! Numerical laboratory for the combined mean-field / semiclassical limit of
//! fermionic dynamics with a mollified Coulomb interaction.
//!
//! The quantum side is represented by reduced density matrices on a periodic
//! grid (exact few-body Schrödinger for two or three particles, Hartree-Fock
//! for larger systems). The kinetic side is a spectral Vlasov-Poisson solver.
//! The two are connected through Husimi measures built from coherent states,
//! and the remainder terms of the Husimi transport equation are evaluated as
//! phase-space fields so that their size and scaling can be measured.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod potential;
pub mod residuals;
pub mod semiclassical;
pub mod state;
pub mod vlasov;

pub use error::{Error, Result};
pub use grid::{PhaseGrid, SpatialGrid, Spectral};

/// Complex scalar used for every wave function and kernel.
pub type C64 = num_complex::Complex64;
