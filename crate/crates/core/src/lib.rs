//! Numerical laboratory for a pilot-wave model of the Dirac particle in which
//! the particle acts back on its guiding field.
//!
//! Everything runs in 1+1 dimensions on a periodic lattice in natural units
//! (ħ = c = 1). The gamma algebra also supports `dim = 4` for the identity
//! checks.

pub mod algebra;
pub mod emtensor;
pub mod ensemble;
pub mod error;
pub mod gauge;
pub mod lattice;
pub mod observables;
pub mod particle;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
