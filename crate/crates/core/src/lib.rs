//! Trotter error analysis for local spin Hamiltonians.
//!
//! The crate covers Pauli algebra, statevector evolution, product formulas,
//! entanglement measures, state-dependent error bounds, worst-case input
//! states, classical shadows and adaptive step scheduling.

pub mod adaptive;
pub mod bounds;
pub mod entanglement;
pub mod error;
pub mod evolve;
pub mod linalg;
pub mod models;
pub mod pauli;
pub mod product_formula;
pub mod shadows;
pub mod state;
pub mod worst_case;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
