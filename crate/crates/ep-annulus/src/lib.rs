//! Configuration, CSV output, manufactured fields and subcommands of the
//! `ep-annulus` driver.

pub mod commands;
pub mod config;
pub mod dual;
pub mod manufactured;
pub mod output;
