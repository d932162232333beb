//! Files, configuration and the `timesuite` command line on top of
//! `timesuite-core`.

pub mod checks;
pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;
pub mod io;
pub mod report;
pub mod weights;
