//! Tracking-by-attention at desk scale.
//!
//! A small reverse-mode autodiff substrate ([`numerics`]) carries an
//! encoder-decoder attention network ([`model`]) whose decoder consumes
//! learned object queries together with track queries carried over from
//! the previous frame. Training uses an identity-constrained set
//! prediction loss ([`assignment`], [`loss`], [`augment`]); inference runs
//! a track lifecycle engine ([`tracker`]) and results are scored with
//! CLEAR MOT and IDF1 ([`metrics`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, checkpoints
//! and the command line live in the companion `attntrack` crate.
#![no_std]

extern crate alloc;

pub mod assignment;
pub mod augment;
pub mod bbox;
mod error;
pub mod image;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod loss;
pub mod optim;
pub mod sequence;
pub mod synth;
pub mod tracker;
pub mod train;

pub use bbox::BoundingBox;
pub use error::{Error, Result};
pub use numerics::{Graph, Tensor, Var};

/// Object identity as used by ground truth and tracks. MOTChallenge ids are
/// positive integers.
pub type Identity = u64;
