//! Component laboratory for visual question answering architectures.
//!
//! Every pluggable piece of a classification-style VQA model (question
//! encoders, visual feature modes, fusion operators, attention mechanisms,
//! the Adamax schedule and the consensus accuracy metric) is implemented on
//! top of a small reverse-mode differentiator in [`tensor`]. The
//! [`harness`] module assembles them from flat key-value configs and runs
//! single experiments or ablation grids.

pub mod attention;
pub mod encoders;
pub mod data;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod registry;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
