//! Minimal dense-tensor numerics with reverse-mode gradients.
//!
//! [`Tensor`] is a row-major buffer with a shape. Forward kernels live in
//! [`ops`] and can be called directly; [`Graph`] records the same kernels on a
//! tape so [`Graph::backward`] can produce gradients for every
//! [`ParamStore`] entry reachable from a scalar loss. [`OptimizerState`]
//! implements AdamW on top of the accumulated gradients.
//!
//! All kernels are generic over [`Real`] so gradient checks can run in 64-bit
//! while training runs in 32-bit.

mod graph;
pub mod ops;
mod optim;
mod params;
mod tensor;

use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;

pub use graph::{Gradients, Graph, NodeId};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

/// Floating-point element type.
pub trait Real:
    Float
    + Default
    + Debug
    + Display
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    fn erf(self) -> Self;
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{0}: non-finite value")]
    NonFinite(&'static str),
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("{op}: index {index} out of range {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: axis out of range")]
    InvalidAxis(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss node must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("node {0} does not belong to this graph")]
    UnknownNode(usize),
    #[error("optimizer step on an empty parameter set")]
    EmptyParams,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
}
