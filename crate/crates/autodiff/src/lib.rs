//! Reverse-mode automatic differentiation on a flat tape of dense tensors.
//!
//! The tape ([`Graph`]) records every operation eagerly together with the
//! values it produced. [`Graph::backward`] replays the chain rule over the
//! recorded nodes in reverse insertion order, which is a valid reverse
//! topological order because an operation can only consume nodes that
//! already exist.
//!
//! Every operation treats its operands as matrices: the last axis is the
//! column axis and all leading axes are folded into rows. There is no
//! general broadcasting; the few broadcasts the pipeline needs (bias rows,
//! per-row/per-column corrections) are explicit operations.

mod error;
mod graph;
mod gradcheck;
pub mod kernels;
mod norm;
mod tensor;

pub use error::AutodiffError;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use norm::{BatchStats, NormMode, RunningStats};
pub use tensor::{Scalar, Tensor};

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;
