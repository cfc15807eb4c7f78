//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is define-by-run: every operation appends a node to a [`Graph`]
//! and values are computed eagerly. `backward` records its vector-Jacobian
//! products as ordinary graph nodes, so a gradient can be fed back into the
//! graph and differentiated again (double backprop). When the caller does not
//! need that, the nodes created by the backward pass are discarded and only
//! the gradient tensors are returned.

mod backward;
mod graph;
mod tensor;

pub mod gradcheck;

pub use backward::{GradEntry, GradientMap};
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
