//! Config-driven experiment harness for the `trotter` command.

pub mod config;
pub mod experiments;
pub mod output;
pub mod suite;
