//! Nonstationary spatio-temporal Gaussian processes whose latent length-scale
//! fields are learned from adaptively selected locations.

// Small fixed-size numeric loops read better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod gp;
pub mod harness;
pub mod latent;
pub mod lisal;
pub mod nonstationary;
pub mod objective;
pub mod optimize;
pub mod oracle;
pub mod selection;

pub use error::{Error, Result};
