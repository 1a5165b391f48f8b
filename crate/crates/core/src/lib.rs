// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod ids;
pub mod ingest;
pub mod mnl;
pub mod rng;
pub mod scripted;
pub mod study;
pub mod token;

pub use error::{Error, Result};
