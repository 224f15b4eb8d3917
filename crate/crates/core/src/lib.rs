//! Simulation and analysis of a covert channel carried by the switching
//! noise that computer power supplies inject into shared power lines.
//!
//! The crate is layered bottom-up: [`signal`] primitives, [`channel`]
//! physics, [`txmod`] framing and load modulation, [`rxdsp`] detection and
//! demodulation, [`defense`] load-randomizing countermeasures and
//! [`harness`] scenario orchestration.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod defense;
mod error;
pub mod harness;
pub mod rng;
pub mod rxdsp;
pub mod signal;
pub mod txmod;

pub use error::{Error, Result};
