//! Unitary histories under measurement events.
//!
//! Measurements are modelled as constraints on whole solutions of the
//! Schrödinger equation rather than as state jumps. The crate provides the
//! finite-dimensional kernel ([`hilbert`]), localization functionals
//! ([`localization`]), events and registries ([`events`]), sampled and exact
//! solution sets ([`solution_space`]), the two-boundary localization
//! eigenproblems ([`two_boundary`]) and end-to-end scenario runners
//! ([`scenarios`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod events;
pub mod hilbert;
pub mod localization;
pub mod report;
pub mod scenarios;
pub mod solution_space;
pub mod spin;
pub mod two_boundary;

pub use error::{Error, Result};

/// Engine version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
