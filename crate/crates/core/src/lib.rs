//! Numerical homogenization of non-divergence elliptic equations with a
//! singular drift and an oscillatory Neumann condition on a strip.
//!
//! The model problem is
//!
//! ```text
//! Tr(A(x/ε) D²u) + (1/ε) B(x/ε)·∇u = 0   in 0 < x·n < 1,
//! u = 0                                     on x·n = 1,
//! ∂ₙu = g(x/ε)                              on x·n = 0,
//! ```
//!
//! with Z^D-periodic `A`, `B`, `g`. The crate computes the cell quantities
//! (invariant measure, correctors, effective matrix), solves the strip
//! problems with a monotone finite-difference scheme, probes the
//! Dirichlet-to-Neumann structure, locates almost periods of the boundary
//! hyperplane, and runs ε-sweeps that extract the effective Neumann datum.

pub mod cell;
pub mod dtn;
pub mod error;
pub mod fields;
pub mod homogenize;
pub mod quasiperiod;
pub mod sparse;
mod stencil;
pub mod strip;

pub use error::{Error, Result};

/// 3×3 matrix storage; only the leading `dim × dim` block is meaningful.
pub type Mat3 = [[f64; 3]; 3];
/// 3-vector storage; only the leading `dim` entries are meaningful.
pub type Vec3 = [f64; 3];

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
