//! Experiment harness for the `adaptrom` library: JSON experiment configs,
//! the ROMX matrix format, field differences and CSV export, per-strategy
//! result records, and the benchmark comparison table. The `adaptrom`
//! binary dispatches into this crate.

// validation deliberately writes `!(x > 0.0)` so that NaN fails alongside
// out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod field;
pub mod pipeline;
pub mod romx;
