//! Numerical tools for symmetric tropical Monge–Ampère equations on the
//! boundary of the polar simplex.
//!
//! The crate models the boundaries `A = ∂Δ` and `B = ∂Δ∨` of the simplex
//! `Δ = conv(m_i)` and its polar, the pairing between them, c-convex
//! functions stored as finite max-affine envelopes, exact c-transforms,
//! Laguerre-type cell decompositions of `A`, the symmetric Monge–Ampère
//! operator and a variational solver for `ν_ψ = ν`.

pub mod cconvex;
pub mod charts;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod lp;
pub mod ma_operator;
pub mod measures;
pub mod na_bridge;
pub mod polytope;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
