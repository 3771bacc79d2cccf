//! Dense row-major tensors with an optional gradient buffer, plus the
//! named trainable [`Parameter`] wrapper carrying Adam moments.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::RngState;

/// Errors raised by tensor and layer operations.
#[derive(Debug, Clone, PartialEq)]
pub enum OpError {
    /// Two operands whose shapes do not conform; both shapes are named.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Convolution/pooling geometry that does not produce positive integer
    /// output dimensions.
    BadGeometry { op: &'static str, detail: String },
    /// Dropout rate outside `[0, 1)`.
    BadRate(f64),
    /// A gradient fed to the optimizer contained NaN or Inf.
    NonFiniteGrad { param: String },
    /// Token id at or beyond the vocabulary size.
    TokenOutOfRange { token: u32, vocab: usize },
    /// Sequence missing its start/end bounds where bounds are required.
    UnboundedSequence,
    /// Mismatched step counts between logits, targets and trace.
    LengthMismatch { op: &'static str, detail: String },
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch: {lhs:?} vs {rhs:?}")
            }
            OpError::BadGeometry { op, detail } => write!(f, "{op}: {detail}"),
            OpError::BadRate(r) => write!(f, "dropout rate must be in [0, 1), got {r}"),
            OpError::NonFiniteGrad { param } => {
                write!(f, "non-finite gradient for parameter `{param}`")
            }
            OpError::TokenOutOfRange { token, vocab } => {
                write!(f, "token id {token} out of range for vocabulary size {vocab}")
            }
            OpError::UnboundedSequence => {
                write!(f, "sequence must carry start/end bounds")
            }
            OpError::LengthMismatch { op, detail } => write!(f, "{op}: {detail}"),
        }
    }
}

impl core::error::Error for OpError {}

/// Dense n-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    /// Uniform values in `[lo, hi)` drawn from `rng` in index order.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut RngState) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the buffer under a new shape of equal element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        self.shape = shape.to_vec();
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated zeroed on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        self.grad.as_mut().unwrap()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }
}

/// Named trainable tensor with Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: &str, value: Tensor) -> Self {
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        Parameter {
            name: String::from(name),
            value,
            first_moment: m,
            second_moment: v,
            step_count: 0,
        }
    }

    /// Glorot-uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(name: &str, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngState) -> Self {
        let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        Parameter::new(name, Tensor::uniform(shape, -bound, bound, rng))
    }

    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Parameter::new(name, Tensor::zeros(shape))
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.value.zero_grad();
    }
}

/// Helper for building shape-mismatch errors without repeating the
/// `to_vec` noise at every call site.
pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> OpError {
    OpError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

pub(crate) fn geometry_err(op: &'static str, detail: String) -> OpError {
    OpError::BadGeometry { op, detail }
}

#[allow(unused)]
pub(crate) fn length_err(op: &'static str, detail: String) -> OpError {
    OpError::LengthMismatch { op, detail }
}

pub(crate) use alloc::format as fmt_detail;
