//! Dense tensors and a tape-based reverse-mode autodiff.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{central_differences, finite_difference_check, max_relative_error};
pub use graph::{Graph, Var};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
