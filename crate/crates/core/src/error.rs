// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |H - H^dagger| = {deviation:e})")]
    NonHermitianInput { deviation: f64 },

    #[error("step size {dt:e} s too coarse: dt * max_frequency = {product:.4} (must be < 0.1)")]
    StepSizeTooCoarse { dt: f64, product: f64 },

    #[error("unitarity lost during propagation (max |U^dagger U - I| = {deviation:e})")]
    UnitarityLost { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time grid is not uniform (relative spacing deviation {deviation:e})")]
    NonUniformGrid { deviation: f64 },

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("trace spans {span:e} s, shorter than one oscillation period ({period:e} s)")]
    InsufficientSpan { span: f64, period: f64 },

    #[error("fit failed: {reason} (residual norm {residual_norm:e})")]
    FitFailure { reason: String, residual_norm: f64 },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("engine mismatch: {0}")]
    EngineMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn fit(reason: impl Into<String>, residual_norm: f64) -> Self {
        Error::FitFailure {
            reason: reason.into(),
            residual_norm,
        }
    }
}
