//! Verification suites over the `toral-core` models: JSON configs in,
//! JSON/CSV reports out.

pub mod checks;
pub mod cli;
pub mod config;
pub mod exec;
pub mod merge;
pub mod report;
pub mod verify;
