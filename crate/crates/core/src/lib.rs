// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod scaling;
pub mod stats;
pub mod stream;
pub mod kernel;
pub mod simulate;
pub mod exit;
pub mod pipeline;
pub mod conditions;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
