//! Stochastic Yang–Mills heat flow on the two-dimensional torus at desk scale.
//!
//! Modules:
//! - [`lie`]: Lie algebra/group core, Casimir, white noise.
//! - [`oneform`]: additive functions on line segments, the distance ρ, Hölder-type norms, curve extension.
//! - [`gauge`]: gauge transformations, holonomies, Wilson loops, gauge recovery, orbit distance bounds.
//! - [`she`]: exact Fourier oracles and samplers for the stochastic heat equation.
//! - [`spde`]: lattice solvers for the renormalised flow and its gauge-transformed systems.
//! - [`renorm`]: truncated heat kernel and renormalisation constants.
//! - [`trees`]: decorated trees, rules, symmetry factors, Υ and counterterms.

pub mod error;
pub mod gauge;
pub mod lattice;
pub mod lie;
pub mod oneform;
pub mod quadrature;
pub mod renorm;
pub mod she;
pub mod spde;
pub mod spectral;
pub mod trees;

pub use error::{Error, Result};
