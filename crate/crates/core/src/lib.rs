#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod bounds;
pub mod config;
pub mod entropy;
pub mod error;
pub mod fft;
pub mod grid;
pub mod lab;
pub mod measurement;
pub mod report;
pub mod states;
pub mod suite;
pub mod transforms;

pub use error::{Error, Result};
