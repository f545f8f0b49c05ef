//! Reference propagator, rate experiments, file formats and the `semikernel`
//! command-line driver built on [`semikernel_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod propagator;

pub use error::{CliError, Result};
