// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use nvsim::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Config = 2,
    Simulation = 3,
    Fit = 4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.code {
            ExitCode::Ok => "ok",
            ExitCode::Config => "config error",
            ExitCode::Simulation => "simulation error",
            ExitCode::Fit => "fit error",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: ExitCode::Config, message: msg.into() }
    }

    pub fn simulation(msg: impl Into<String>) -> Self {
        CliError { code: ExitCode::Simulation, message: msg.into() }
    }

    pub fn fit(msg: impl Into<String>) -> Self {
        CliError { code: ExitCode::Fit, message: msg.into() }
    }

    pub fn io(what: &str, e: impl fmt::Display) -> Self {
        // unwritable output counts as a simulation-stage failure
        CliError::simulation(format!("{what}: {e}"))
    }

    /// Any library error raised while building inputs is a config error.
    pub fn from_config(e: Error) -> Self {
        CliError::config(e.to_string())
    }

    /// Library error raised while simulating.
    pub fn from_simulation(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_)
            | Error::StepSizeTooCoarse { .. }
            | Error::InsufficientSamples { .. }
            | Error::DegenerateDesign(_) => ExitCode::Config,
            Error::FitFailure { .. } => ExitCode::Fit,
            _ => ExitCode::Simulation,
        };
        CliError { code, message: e.to_string() }
    }

    /// Library error raised while fitting.
    pub fn from_fit(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InsufficientSamples { .. } | Error::DegenerateDesign(_) => {
                ExitCode::Config
            }
            _ => ExitCode::Fit,
        };
        CliError { code, message: e.to_string() }
    }
}
