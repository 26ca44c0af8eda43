//! Polytopic matrix factorization.
//!
//! Given `Y = H·S` where every column of `S` lies in a known convex polytope,
//! recover `H` and `S` up to a signed permutation by determinant-based
//! optimization. The crate also carries the convex-geometry tooling the
//! method relies on:
//!
//! - [`polytope`]: H-form, V-form and feature-spec polytopes, polars and
//!   brute-force representation conversion at small dimension.
//! - [`projection`]: Euclidean projections onto the supported polytope families.
//! - [`mvie`]: maximum-volume inscribed ellipsoids (closed forms and a
//!   log-barrier Newton solver) with a John-condition certificate.
//! - [`checks`]: identifiability of a polytope and sufficient scattering of a
//!   sample set.
//! - [`factorizer`]: the alternating accelerated projected-gradient solver.
//! - [`datagen`]: synthetic ground truth (polar-domain and inflated-MVIE
//!   samplers, mixing matrices, noise).
//! - [`metrics`]: SIR after signed-permutation alignment.
//! - [`experiment`]: sweep harness producing CSV records.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod factorizer;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod metrics;
pub mod mvie;
pub mod polytope;
pub mod projection;

pub use error::{Error, Result};

pub use mvie::Ellipsoid;
pub use polytope::{FeatureConstraint, FeatureSpec, HalfspaceForm, Polytope, SpecialKind, VertexForm};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
