//! Contrastive learning for color constancy on synthetic raw-RGB scenes.
//!
//! Pixels are row vectors and color transforms act on the right:
//! `out = pixel · M`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod baselines;
pub mod cli;
pub mod color_math;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod io_format;
pub mod model;
pub mod scene_synth;

pub use error::{Error, Result};
