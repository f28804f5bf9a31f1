//! Library surface of the `cdrlab` command-line tool, exposed so
//! integration tests (and other harnesses) can drive experiments without a
//! subprocess.

pub mod commands;
pub mod config;
pub mod orchestrate;
pub mod report;
pub mod svg;
