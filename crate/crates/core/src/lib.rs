//! Numerical laboratory for the mean-field limit of particle systems with
//! bounded, possibly rough, interaction kernels.
//!
//! The crate simulates the N-particle system, solves the limiting
//! Vlasov / McKean-Vlasov equation on a phase-space grid, evaluates the
//! relative-entropy functional `R_N` and its exponential moments, and checks
//! the cancellation and counting identities behind the exponential-moment
//! bound by brute force.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cancellation_oracle;
pub mod chaos_metrics;
pub mod combinatorics;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod par;
pub mod particle_system;
pub mod quadrature;
pub mod rng;
pub mod vlasov_field;

pub use error::{Error, Result};
pub use kernels::{DensityField, Domain, Kernel, KernelSpec};
pub use particle_system::{NoiseSchedule, ParticleEnsemble};
