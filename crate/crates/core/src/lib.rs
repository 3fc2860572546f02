//! Simulation and reconstruction of the two-parameter single-qubit damping
//! channel family.
//!
//! The crate covers the whole chain used to characterise a probabilistic
//! linear-optical implementation of the channel:
//!
//! - [`qmath`]: small dense complex linear algebra (tensor products, partial
//!   traces, PSD square roots, trace norms).
//! - [`channel`]: Kraus operators, channel application, process (χ) matrices,
//!   Choi states and success probabilities of Kraus decompositions.
//! - [`optics`]: a Jones-calculus model of the beam-displacer interferometer
//!   with switchable liquid-crystal retarders, including setup imperfections.
//! - [`tomography`]: two-qubit state tomography and ancilla-assisted
//!   maximum-likelihood process tomography.
//! - [`metrics`]: process fidelity, maximum trace distance, tangle and
//!   Monte-Carlo error bars.
//!
//! Heavy Monte-Carlo loops go through [`parallel`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Results do
//! not depend on the execution mode.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod metrics;
pub mod optics;
pub mod optim;
pub mod parallel;
pub mod qmath;
pub mod tomography;

pub use error::{Error, Result};
