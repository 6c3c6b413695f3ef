//! Command-line front end for membrane-mech: campaign batch runs, reports and
//! the small utilities around them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod commands;
pub mod generate;
pub mod pipeline;
pub mod settings;
pub mod svg;
pub mod table;
pub mod trend;

pub use commands::{run, Cli};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FATAL: i32 = 1;
    /// Some inputs failed; everything else was processed and written.
    pub const PARTIAL: i32 = 2;
}
