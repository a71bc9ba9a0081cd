#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chol;
pub mod error;
pub mod gp_exact;
pub mod inducing;
pub mod kernels;
pub mod report;
pub mod svgp;
pub mod bounds;

pub use error::{Error, Result};
