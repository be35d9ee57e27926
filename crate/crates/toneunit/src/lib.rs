//! Tone-aware discrete speech units learned with CTC supervision.
//!
//! The crate wires a small convolutional speech encoder, a trainable
//! quantizer (finite scalar quantization or Gumbel-Softmax vector
//! quantization), and a CTC decoder into a single jointly trained model,
//! together with a deterministic synthetic tonal corpus, a k-means
//! baseline, and the evaluation/analysis pipeline around them.
//!
//! Everything runs on the CPU in 64-bit floats with explicit
//! forward/backward routines, so every gradient in the system can be
//! audited against finite differences.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod ctc;
pub mod model;
pub mod numcore;
pub mod pipeline;
pub mod quantizers;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("input too short: {op} needs at least {needed} frames, got {got}")]
    InputTooShort {
        op: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{what} out of range: {value} not in [0, {bound})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("non-finite gradient in parameter '{name}'")]
    NonFiniteGradient { name: String },

    #[error("infeasible CTC target: needs {needed} frames, instance has {got}")]
    InfeasibleTarget { needed: usize, got: usize },

    #[error("enumeration bound exceeded: {states} states > {bound}")]
    EnumerationBound { states: u128, bound: u128 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("corrupt or incompatible file {path}: {detail}")]
    CorruptFile { path: String, detail: String },

    #[error("refusing to overwrite existing output {0} (pass --force)")]
    WouldOverwrite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
