//! File formats, configuration and the command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod csv_out;
pub mod error;
pub mod fsio;
pub mod pgm;
pub mod scenes;
pub mod sketch_io;
