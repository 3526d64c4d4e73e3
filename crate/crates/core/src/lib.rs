//! Path-wise transfer of entropic optimal transport couplings.
//!
//! Given a reference coupling between two marginals and a pair of new
//! marginals, the coupling is carried along a marginal path by small
//! exponential tilts whose rates solve a linear system on the current
//! coupling, and then sampled through a bridge-matching regression field.
//!
//! The crate is `no_std` with `alloc`. IO, configuration files and the
//! command-line driver live in the `taco` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod flow_sampler;
pub mod geometry;
pub mod linalg;
pub mod marginal_path;
pub mod math;
pub mod measures;
pub mod metrics;
pub mod rng;
pub mod sinkhorn;
pub mod tilting;

pub use error::{Error, Result};
