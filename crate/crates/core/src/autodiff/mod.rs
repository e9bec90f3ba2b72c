//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Define-by-run: every operation records its parents on the produced
//! [`Value`]; [`Value::backward`] runs a single reverse-topological sweep
//! from a scalar root, accumulating gradients into tracked nodes, and then
//! detaches the visited graph so intermediates are freed.
//!
//! The operator set is exactly what the stage-aware model needs; there is no
//! broadcasting beyond vector-times-scalar, no GPU path, and no higher-order
//! derivatives.

mod gradcheck;
#[cfg(test)]
mod tests;
mod value;

pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use value::{concat, free_graph, Value};
