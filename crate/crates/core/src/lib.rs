//! Perturbed minimizing movements.
//!
//! Implicit Euler iterated minimization where every step carries its own
//! dissipation coefficient `a_n`:
//!
//! ```text
//! u_n ∈ argmin_u  φ_ε(u) + a_n |u - u_{n-1}|² / (2τ)
//! ```
//!
//! The crate covers the generic scalar driver ([`scheme`]), discrete descent
//! on lattices ([`lattice`]), homogenization of wiggly energies
//! ([`wiggly`]) and the motion of coordinate rectangles under a lattice
//! perimeter ([`crystal`]). Coefficient sequences live in [`perturbation`].

pub mod crystal;
pub mod error;
pub mod lattice;
pub mod minimize;
pub mod output;
pub mod perturbation;
pub mod potential;
pub mod scheme;
pub mod wiggly;

pub use error::{Error, Result};
pub use perturbation::Schedule;
pub use scheme::Trajectory;

/// Relative proximity below which a parameter is considered to sit on a
/// bifurcation (non-unique minimizer) in floating-point mode.
pub const BIFURCATION_REL_TOL: f64 = 1e-9;

/// Two candidates are tied when their objective gap is at most this times
/// `max(1, |objective|)`.
pub const TIE_REL_TOL: f64 = 1e-12;

/// Version of this crate, recorded in result metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
