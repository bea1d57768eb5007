//! Library surface of the command-line tool: configuration parsing, report
//! emission, and experiment runners. The binary in `main.rs` is a thin
//! argument-parsing wrapper over these.

pub mod config;
pub mod report;
pub mod runner;
