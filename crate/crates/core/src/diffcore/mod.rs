//! Differentiation substrate: a reverse-mode tape, a one-hidden-layer network,
//! softmax helpers and a central-difference gradient checker.

mod gradcheck;
mod mlp;
mod params;
mod tape;

pub use gradcheck::{finite_diff_check, FdReport, FD_ABS_FLOOR};
pub use mlp::{HiddenActivation, Mlp, OutputActivation};
pub use params::{ParamVector, Segment};
pub use tape::{Gradients, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward root must be scalar, got length {0}")]
    NonScalarRoot(usize),
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log(softmax(logits))` without forming the probabilities first.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}
