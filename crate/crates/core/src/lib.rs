//! Open quantum systems exchanging energy and particles with a reservoir.
//!
//! Per-particle-number density operators evolve under a Lindblad equation
//! with the effective Hamiltonian `H_N − μN·Id`; grand-canonical states are
//! built sector by sector, and a Metropolis chain over `N` estimates
//! observables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gibbs;
pub mod hierarchy;
pub mod lindblad;
pub mod operator;

pub use error::{Error, Result};
pub use operator::{DensityOperator, HermitianOperator, Operator, C64};
