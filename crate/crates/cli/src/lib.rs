//! Command-line front end: headless seed sweeps, the verification suite, and
//! the HTTP service launcher.

// range checks are written `!(x >= lo)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod run;
pub mod verify;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
}
