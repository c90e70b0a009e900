//! Monte Carlo harness and file formats around `arcs-core`: parallel
//! replication studies, CSV input and output, experiment specs and the
//! command implementations behind the `arcs` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod runner;
pub mod selftest;

pub use error::{HarnessError, Result};
