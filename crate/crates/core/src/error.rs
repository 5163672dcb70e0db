use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Errors raised by tensor arithmetic and the autodiff tape.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("fully masked attention row")]
    FullyMaskedRow,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

/// Errors raised by the model, data handling, training and evaluation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("label error: label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("non-finite gradient in parameter `{param}` at element {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("empty confusion matrix")]
    EmptyConfusion,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
