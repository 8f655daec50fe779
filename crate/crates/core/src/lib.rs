//! Single-anchor, one-way multipath radio-SLAM in 2D.
//!
//! A receiver with an unknown clock offset and unknown array orientation
//! observes single-bounce paths from one transmitter at the origin. From the
//! per-path (TDoA, AoD, DAoA) triplets the crate recovers the receiver
//! position, clock offset, orientation and the reflector map.
//!
//! Module map:
//!
//! - [`geometry`]: scenes and the exact forward model.
//! - [`dictionary`]: dictionary grids and measurement quantizers.
//! - [`channel`]: OFDM hybrid-beamforming signal model, greedy sparse recovery
//!   and the measurement-domain Fisher information.
//! - [`localization`]: linear least-squares location with known orientation.
//! - [`orientation`]: orientation recovery by group consensus.
//! - [`crlb`]: location-domain error bounds.
//! - [`montecarlo`]: seeded experiment harness, CDFs and sweeps.
//! - [`cli`]: the `slam` command-line frontend.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod crlb;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod localization;
pub mod montecarlo;
pub mod orientation;
mod serde_vec2;

pub use error::{Error, Result};
