//! Composable domain-generalization training and benchmarking.
//!
//! A [`models::Model`] turns a mini-batch into a task loss plus weighted
//! regularizers; a [`trainers::Trainer`] routes batches into the model,
//! appends its own regularizers and performs the parameter update. The
//! [`benchmark`] module samples hyperparameters, runs job matrices and
//! renders result charts.

mod error;

pub mod benchmark;
pub mod experiment;
pub mod models;
pub mod netcore;
pub mod rng;
pub mod tasks;
pub mod trainers;

pub use error::{Error, Result};
