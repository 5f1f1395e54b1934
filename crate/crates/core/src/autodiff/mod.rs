//! Tape-based reverse-mode automatic differentiation over dense arrays.
//!
//! A [`Graph`] is built fresh for every batch: parameters are copied in as
//! leaves, the forward pass records ops with eagerly computed values, and
//! [`Graph::backward`] fills in gradients. Only scalar-vs-tensor and
//! equal-shape broadcasting is supported; the few structured broadcasts the
//! renderer needs ([`Graph::add_row`], [`Graph::mul_rows`]) are explicit ops.

mod archive;
mod graph;
mod params;
mod tensor;
#[cfg(test)]
mod tests;

pub use archive::{
    read_archive, write_archive, ArchiveEntry, ArchiveError, ArchiveManifest, ArrayRecord,
    ARCHIVE_VERSION,
};
pub use graph::{GradFault, Graph, Var};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: axis {axis} is invalid for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: range {start}..{} exceeds extent {extent}", start + len)]
    OutOfRange {
        op: &'static str,
        start: usize,
        len: usize,
        extent: usize,
    },
    #[error("{op}: no inputs")]
    Empty { op: &'static str },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
