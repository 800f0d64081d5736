// `!(a < b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aim;
pub mod cost;
pub mod dists;
pub mod error;
pub mod io;
pub mod mcmc;
pub mod numeric;
pub mod optimizer;
pub mod stats;
pub mod studies;
pub mod surrogate;

pub use error::{Error, Result};
