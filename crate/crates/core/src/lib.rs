//! Cayley-Dickson algebras, CM lattices and octonionic elliptic functions:
//! exact arithmetic for the algebraic layer, deterministic parallel lattice
//! sums for the analytic layer, and the division-value trace machinery that
//! ties them together.

pub mod algebra;
pub mod cm_trace;
pub mod config;
pub mod elliptic;
pub mod kernels;
pub mod lattice;
pub mod linalg;
pub mod number_field;
pub mod report;
pub mod scalar;

pub use algebra::{basis, CDElement};
pub use lattice::Lattice;
pub use number_field::{MQElement, MQField};
pub use scalar::{Rat, Scalar};
