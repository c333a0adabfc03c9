#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod gaussian;
pub mod hgr;
pub mod lowerbound;
pub mod numerics;
pub mod tightness;

pub use error::{Error, Result};
