//! Command-line driver: experiments, acceptance harness and parameter sweeps.

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod verify;
