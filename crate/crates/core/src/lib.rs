//! Numerical toolkit for cadlag processes beyond semimartingales.
//!
//! The crate is `no_std` (it needs `alloc`). It contains:
//!
//! * a path model on uniform grids with an explicit jump registry ([`path`]),
//! * reference simulators with known ground-truth decompositions
//!   ([`simulate`], [`pdmp`], [`distdrift`]),
//! * epsilon-regularized covariation estimators ([`brackets`]),
//! * weak Dirichlet decomposition checks ([`decompose`]),
//! * characteristics triplets and their transformations ([`characteristics`]),
//! * statistical checks of generalized martingale problems ([`mtgcheck`]).
//!
//! IO, parallel ensemble generation and the command line runner live in the
//! `dirichlet-lab` companion crate.
#![no_std]
// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod brackets;
pub mod characteristics;
pub mod decompose;
pub mod distdrift;
pub mod error;
pub mod expr;
pub mod func;
pub mod kernel;
pub mod mtgcheck;
pub mod path;
pub mod pdmp;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod truncation;
pub mod verdict;

pub use error::{Error, Result};
pub use path::{GroundTruth, Jump, JumpMeasure, PathEnsemble, SamplePath, TimeGrid};
pub use truncation::TruncationFn;
pub use verdict::Verdict;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
