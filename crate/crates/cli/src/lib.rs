//! Command implementations behind the `diffnet` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod model;
