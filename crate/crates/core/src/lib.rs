#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod classifier;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod fixation;
pub mod gesture;
pub mod interaction;
pub mod metrics;
pub mod model;
pub mod patch;
pub mod plotdata;
pub mod replay;
pub mod saliency;
pub mod sessionlog;
pub mod simulator;

pub use error::{Error, Result};
