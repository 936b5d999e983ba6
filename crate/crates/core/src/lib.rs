//! Sensitivity analysis for average main effects estimated while ignoring
//! interference, unmeasured confounding, and lack of transportability.
//!
//! The crate is `no_std` with `alloc`. It covers:
//!
//! - [`graph`]: interference networks, exposure mappings and exact
//!   neighbourhood-exposure distributions;
//! - [`scenario`]: table-driven discrete data-generating processes with exact
//!   joint enumeration;
//! - [`simulate`]: realized network populations and configuration-conditional
//!   measures;
//! - [`estimate`]: expectation measures, nuisance scores, the naive IPW
//!   functional and the oracle estimands;
//! - [`decompose`]: the covariance decompositions of the naive bias;
//! - [`bounds`]: worst-case bias bounds from sensitivity parameters.
//!
//! File formats, the identity-suite driver and the CLI live in the companion
//! `spillsense` crate.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod decompose;
pub mod error;
pub mod estimate;
pub mod graph;
pub mod numeric;
pub mod scenario;
pub mod simulate;

pub use error::{Error, ErrorClass, Result};
