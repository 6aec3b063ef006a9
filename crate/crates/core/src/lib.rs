//! Unsupervised video anomaly discovery with self-paced refinement.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. It holds everything that is pure computation: the small
//! convolutional autoencoder and its optimizer, foreground localization,
//! block-matching optical flow, spatio-temporal cube construction, the
//! self-paced weighting scheme and its training loop, score fusion, frame-level
//! metrics and the synthetic corpus renderer. File formats, dataset IO and the
//! command line live in the `spr` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cube;
pub mod error;
pub mod flow;
pub mod frame;
pub mod localize;
pub mod metrics;
pub mod nn;
pub mod score;
pub mod spr;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Spatial side of every cube fed to the network.
pub const CUBE_SIZE: usize = 32;
/// Temporal depth of every cube.
pub const CUBE_DEPTH: usize = 5;
