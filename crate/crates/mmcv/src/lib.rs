//! Command-line driver for `mmcv-core`: configuration, commands, reports
//! and field files.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use std::process::ExitCode;
use std::time::Instant;

use mmcv_core::Clock;

/// How a command ended.
#[derive(Debug)]
pub enum Outcome {
    /// Exit 0.
    Success,
    /// Exit 1: not converged, inadmissible, or a failed check.
    Failure,
}

/// A configuration, input or output problem; exit 2.
#[derive(Debug)]
pub struct ConfigError(pub anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.into())
    }
}

pub type CmdResult = Result<Outcome, ConfigError>;

pub fn exit_code(r: &CmdResult) -> ExitCode {
    match r {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Failure) => ExitCode::from(1),
        Err(_) => ExitCode::from(2),
    }
}

/// Wall-clock seconds since construction.
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        StdClock(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
