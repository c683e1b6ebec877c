//! Library side of the `powerprint` command: configuration, commands and
//! report formats.

pub mod commands;
pub mod config;
pub mod report;
