#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod cli;
pub mod config;
pub mod error;
pub mod executor;
pub mod expr;
pub mod flow;
pub mod hybrid;
pub mod library;
pub mod montecarlo;
pub mod sets;

pub use error::{Error, Result};
