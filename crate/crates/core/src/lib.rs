#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arms;
pub mod config;
pub mod context_space;
pub mod environment;
pub mod error;
pub mod extensions;
pub mod metrics;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
