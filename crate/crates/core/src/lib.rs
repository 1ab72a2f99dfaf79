//! Entropic interpolations of continuous-time Markov chains on finite graphs.
//!
//! The crate builds forward/backward generators on a finite connected graph,
//! solves the Schrödinger system for prescribed endpoint marginals, and
//! evaluates the Θ/Θ₂ operator calculus that governs the first and second
//! time-derivatives of the relative entropy `H(μ_t|m)` along the resulting
//! interpolation. On top of that it checks entropy decay and modified
//! log-Sobolev inequalities along heat flows and estimates the pointwise
//! curvature functional `inf_u Θ₂u(x)/Θu(x)`.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | state spaces, jump kernels, generator pairs, graph JSON |
//! | [`semigroup`] | `e^{tL}`, transition densities, bridge marginals |
//! | [`schroedinger`] | (f,g)-transforms, IPF solver, endpoint coupling |
//! | [`interpolation`] | `ρ_t`, potentials, current kernels, mixture check |
//! | [`theta`] | θ, θ*, h, Γ, B, C, Θ, Θ₂ and continuum references |
//! | [`entropy`] | relative entropy, derivatives, heat flow, Fisher information |
//! | [`curvature`] | curvature inequality residuals and optimizers |
//! | [`cli`] | the `entropic` command-line front end |

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod curvature;
pub mod entropy;
pub mod error;
pub mod graph;
pub mod interpolation;
pub mod schroedinger;
pub mod semigroup;
pub mod theta;

pub use error::{Error, Result};
pub use graph::{Direction, GeneratorPair, JumpKernel, PositiveMeasure, StateSpace};
pub use interpolation::EntropicInterpolation;
pub use schroedinger::{Coupling, EndpointData};
pub use semigroup::Semigroup;
