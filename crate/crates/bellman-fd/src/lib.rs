//! Command-line driver, file formats and reports around `bellman-fd-core`.

pub mod commands;
pub mod config;
pub mod expr;
pub mod io;
pub mod report;
