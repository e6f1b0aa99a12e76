//! Numerical verification toolkit for the generalized Cauchy-Bunyakovsky-Schwarz
//! functional `Φ_d^(n)` on complex hypermatrices, its Lagrange-type identities,
//! its symmetries, its quantum-information reformulation, and its integral
//! analogues.

pub mod battery;
pub mod cbs;
pub mod error;
pub mod hypermatrix;
pub mod integral;
pub mod lagrange;
pub mod numeric;
pub mod quantum;
pub mod report;
pub mod rng;
pub mod search;
pub mod symmetries;

pub use error::{Error, Result};
