//! Dense matrix arithmetic and a reverse-mode differentiation graph.

mod findiff;
mod graph;
mod matrix;

pub use findiff::finite_diff_check;
pub use graph::{ExprGraph, NodeId, XiSource};
pub use matrix::{solve_linear, Matrix};
