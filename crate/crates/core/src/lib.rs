//! Curriculum consistency distillation on synthetic 2-D distributions.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod consistency;
pub mod distill;
pub mod error;
pub mod eval;
pub mod flowmatch;
pub mod nnet;
pub mod rng;
pub mod svg;
pub mod synthdata;

pub use error::{Error, Result};
