//! Pipeline-depth exploration for floating-point units running dense
//! linear algebra: a small ISA, kernel generators, a DAG characterizer,
//! a cycle-approximate simulator and the analytical time-per-instruction
//! model they are compared against.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterize;
pub mod error;
pub mod isa;
pub mod kernels;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
