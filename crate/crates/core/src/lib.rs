//! Digital pseudo-differential operators on the lattice quadrant: boundary value
//! problems posed through wave factorization, their reduction to boundary
//! integral systems, and comparison with the continuous problem.

pub mod comparison;
pub mod error;
pub mod lattice;
pub mod operators;
pub mod symbols;
pub mod system;

pub use error::{Error, Result};
pub use num_complex::Complex64;
