//! Dense linear algebra, activation and attention kernels, statistics, a
//! reverse-mode tape over a fixed op set, and a finite-difference checker.

mod gradcheck;
mod kernels;
mod matrix;
mod stats;
mod tape;

pub use gradcheck::{grad_check, GradCheckConfig, GradReport, ParamCheck};
pub use kernels::{
    cosine, cross_attention, kl_divergence, sigmoid, silu, silu_grad, softmax, swiglu, Divergence,
};
pub use matrix::{argmax, Matrix, Simplex};
pub use stats::{pearson, t_statistic, TStat};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("not a probability vector: {0}")]
    NotSimplex(String),
    #[error("degenerate zero vector")]
    DegenerateVector,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;
