// Negated comparisons like `!(x > 0.0)` deliberately treat NaN as
// invalid input; indexed loops are the house style in the numeric
// kernels where several arrays advance together.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod cells;
pub mod config;
pub mod effective;
pub mod environment;
pub mod exclusion;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod macroscale;
pub mod microscale;
pub mod rates;
pub mod rng;
pub mod torus;
pub mod unionfind;
pub mod walkers;

pub use error::{Error, Result};
