// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Dressed-state NV-center electrometry simulator.
//!
//! Basis order everywhere is `(|+1>, |0>, |-1>)`. Frequencies are angular
//! (rad/s), electric fields V/cm, magnetic fields tesla, times seconds.

pub mod error;
pub mod hamiltonian;
mod lsq;
pub mod noise;
pub mod propagator;
pub mod sequence;
pub mod spectral;
pub mod spin;
pub mod trace;

pub use error::{Error, Result};
pub use hamiltonian::{
    DressedOrder, DriveParameters, FieldEnvironment, NoisePerturbation, NvConstants,
};
pub use spin::{dressed_basis, matrix_exponential, spin_operators, SpinMatrix, SpinState};
pub use sequence::{Engine, RamseyOptions};
pub use trace::SignalTrace;
