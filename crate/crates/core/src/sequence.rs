// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Ramsey protocol under continuous dynamical decoupling: the
//! initialization chain `U_Y(pi) U_Z(pi) U_X(pi/2)`, free evolution under
//! the phase-modulated drive, and the reversed readout chain
//! `U_X(pi/2) U_Z(pi) U_Y(pi)` followed by projection on `|0>`.
//!
//! Gates act in the frame rotating at the zero-field splitting,
//! `R(t) = exp(i D t Sz^2)`. The microwave gates rotate the two-level space
//! `{|0>, bright}` and leave the dark state alone.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    check_hierarchy, dressed_hamiltonian, modulation_phase, second_frame, transition_frequencies,
    DressedOrder, DriveParameters, FieldEnvironment, NvConstants,
};
use crate::propagator::{propagate_pulse_unitary, propagate_sampled, PropagationConfig, ResonantPulse};
use crate::spectral::fit_sinusoid;
use crate::spin::{c, dressed_basis, expm_unchecked, spin_operators, SpinMatrix, SpinState, C64};
pub use crate::trace::{Sampling, SignalTrace, TraceMetadata};

/// Minimum fidelity of a waveform gate against its ideal counterpart.
pub const WAVEFORM_FIDELITY: f64 = 0.999;
/// Default Rabi frequency of waveform microwave gates, rad/s.
pub const DEFAULT_MICROWAVE_RABI: f64 = 2.0 * PI * 20e6;
/// Default axial phase rate `2 gamma Bz` of waveform Z gates, rad/s.
pub const DEFAULT_AXIAL_RATE: f64 = 2.0 * PI * 5e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    MicrowaveX,
    MicrowaveY,
    AxialZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PulseMode {
    Ideal,
    /// A square pulse; `amplitude` is the rotation rate in rad/s (the Rabi
    /// frequency for microwave pulses, `2 gamma Bz` for axial pulses).
    Waveform { duration: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub kind: PulseKind,
    pub angle: f64,
    pub mode: PulseMode,
}

impl PulseSpec {
    pub fn ideal(kind: PulseKind, angle: f64) -> Self {
        PulseSpec {
            kind,
            angle,
            mode: PulseMode::Ideal,
        }
    }

    /// Waveform pulse at rotation rate `amplitude`; the duration follows
    /// from `angle = amplitude * duration`.
    pub fn waveform(kind: PulseKind, angle: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude != 0.0) {
            return Err(Error::invalid("waveform amplitude must be finite and nonzero"));
        }
        let p = PulseSpec {
            kind,
            angle,
            mode: PulseMode::Waveform {
                duration: angle / amplitude,
                amplitude,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.angle.is_finite() {
            return Err(Error::invalid("pulse angle must be finite"));
        }
        if let PulseMode::Waveform { duration, amplitude } = self.mode {
            if !(duration.is_finite() && amplitude.is_finite() && duration >= 0.0) {
                return Err(Error::invalid("waveform needs finite amplitude and duration >= 0"));
            }
            let angle = amplitude * duration;
            if (angle - self.angle).abs() > 1e-9 * self.angle.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "waveform area {angle} does not match angle {}",
                    self.angle
                )));
            }
        }
        Ok(())
    }
}

/// Generator of `U_Y`: `i|B><0| - i|0><B|` for the bright state `B`.
fn y_generator() -> SpinMatrix {
    let bright = dressed_basis().plus_d;
    let zero = SpinState::zero();
    SpinMatrix::outer(&bright, &zero).scale_c(c(0.0, 1.0)) - SpinMatrix::outer(&zero, &bright).scale_c(c(0.0, 1.0))
}

/// `U_X(theta) = exp(-i theta Sx / 2)`.
pub fn u_x(theta: f64) -> SpinMatrix {
    expm_unchecked(&spin_operators().sx, 0.5 * theta)
}

/// `U_Y(theta)`: rotation about Y in `{|0>, bright}`.
pub fn u_y(theta: f64) -> SpinMatrix {
    expm_unchecked(&y_generator(), 0.5 * theta)
}

/// `U_{Z,real}(phi) = diag(e^{-i phi/2}, 1, e^{i phi/2})`.
pub fn u_z_real(phi: f64) -> SpinMatrix {
    SpinMatrix::from_diagonal([
        C64::from_polar(1.0, -0.5 * phi),
        c(1.0, 0.0),
        C64::from_polar(1.0, 0.5 * phi),
    ])
}

/// Composite `U_Z(pi) = U_{Z,real}(pi/2) U_X(2 pi) U_{Z,real}(-pi/2)`.
pub fn composite_z_pi() -> SpinMatrix {
    u_z_real(FRAC_PI_2) * u_x(2.0 * PI) * u_z_real(-FRAC_PI_2)
}

/// The ideal unitary of `p`, whatever its mode.
pub fn gate_unitary(p: &PulseSpec) -> SpinMatrix {
    match p.kind {
        PulseKind::MicrowaveX => u_x(p.angle),
        PulseKind::MicrowaveY => u_y(p.angle),
        PulseKind::AxialZ => u_z_real(p.angle),
    }
}

/// `D`-frame propagator of a waveform pulse (or the ideal unitary for ideal
/// mode), checked against the ideal gate.
pub fn realize_gate(
    c: &NvConstants,
    f: &FieldEnvironment,
    p: &PulseSpec,
    cfg: &PropagationConfig,
) -> Result<SpinMatrix> {
    p.validate()?;
    let ideal = gate_unitary(p);
    let (duration, amplitude) = match p.mode {
        PulseMode::Ideal => return Ok(ideal),
        PulseMode::Waveform { duration, amplitude } => (duration, amplitude),
    };
    let d = c.zero_field_splitting;
    let (pulse, fields) = match p.kind {
        PulseKind::MicrowaveX | PulseKind::MicrowaveY => {
            let base = if p.kind == PulseKind::MicrowaveX { 0.0 } else { -FRAC_PI_2 };
            let phase = if amplitude < 0.0 { base + PI } else { base };
            let pulse = ResonantPulse {
                rabi: amplitude.abs(),
                frequency: d,
                phase,
                duration,
            };
            (pulse, *f)
        }
        PulseKind::AxialZ => {
            let mut fields = *f;
            fields.b[2] += amplitude / (2.0 * c.gamma);
            let pulse = ResonantPulse {
                rabi: 0.0,
                frequency: d,
                phase: 0.0,
                duration,
            };
            (pulse, fields)
        }
    };
    let lab = propagate_pulse_unitary(c, &fields, &pulse, cfg)?;
    // R(duration) U R(0)^dagger with R(0) = 1
    let u = d_frame(d, duration) * lab;
    let fidelity = u.gate_fidelity(&ideal);
    if !(fidelity > WAVEFORM_FIDELITY) {
        return Err(Error::EngineMismatch(format!(
            "waveform {:?} gate fidelity {fidelity:.6} below {WAVEFORM_FIDELITY}",
            p.kind
        )));
    }
    Ok(u)
}

/// `R(t) = exp(i D t Sz^2)`.
fn d_frame(d: f64, t: f64) -> SpinMatrix {
    let p = C64::from_polar(1.0, d * t);
    SpinMatrix::from_diagonal([p, c(1.0, 0.0), p])
}

/// How the gates of the protocol are realized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GateMode {
    #[default]
    Ideal,
    /// Square pulses at the given rotation rates (rad/s).
    Waveform { microwave_rabi: f64, axial_rate: f64 },
}


/// Initialization and readout chains as single unitaries.
#[derive(Debug, Clone, Copy)]
pub struct GateSet {
    pub init: SpinMatrix,
    pub readout: SpinMatrix,
}

impl GateSet {
    pub fn ideal() -> Self {
        GateSet {
            init: u_y(PI) * composite_z_pi() * u_x(FRAC_PI_2),
            readout: u_x(FRAC_PI_2) * composite_z_pi() * u_y(PI),
        }
    }

    /// Gates realized as waveforms; readout reuses the same pulses in
    /// reverse order.
    pub fn build(c: &NvConstants, f: &FieldEnvironment, mode: GateMode, cfg: &PropagationConfig) -> Result<Self> {
        let (rabi, rate) = match mode {
            GateMode::Ideal => return Ok(Self::ideal()),
            GateMode::Waveform { microwave_rabi, axial_rate } => (microwave_rabi, axial_rate),
        };
        let cfg = PropagationConfig {
            frame: crate::propagator::Frame::Lab,
            ..*cfg
        };
        let g = |kind, angle, amplitude| -> Result<SpinMatrix> {
            realize_gate(c, f, &PulseSpec::waveform(kind, angle, amplitude)?, &cfg)
        };
        let x_half = g(PulseKind::MicrowaveX, FRAC_PI_2, rabi)?;
        let y_pi = g(PulseKind::MicrowaveY, PI, rabi)?;
        let z_pi = g(PulseKind::AxialZ, FRAC_PI_2, rate)? * g(PulseKind::MicrowaveX, 2.0 * PI, rabi)?
            * g(PulseKind::AxialZ, -FRAC_PI_2, -rate)?;
        Ok(GateSet {
            init: y_pi * z_pi * x_half,
            readout: x_half * z_pi * y_pi,
        })
    }

    /// State after initialization from `|0>`.
    pub fn initial_state(&self) -> SpinState {
        self.init.apply(&SpinState::zero())
    }

    /// `|<0| readout |psi>|^2`.
    pub fn read(&self, psi: &SpinState) -> f64 {
        self.readout.apply(psi).population(crate::spin::Level::Zero)
    }
}

/// Readout probability with the alternative real-`U_Z` chain
/// `U_Y(pi/2) U_{Z,real}(pi) U_X(pi)`.
pub fn readout_real_z(psi: &SpinState) -> f64 {
    (u_y(FRAC_PI_2) * u_z_real(PI) * u_x(PI))
        .apply(psi)
        .population(crate::spin::Level::Zero)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Closed-form signal.
    Analytic,
    /// Ideal gates around evolution under the dressed Hamiltonian.
    Gates,
    /// Ideal or waveform gates around exact propagation of `H0 + H1(t)`.
    Full,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Gates => "gates",
            Engine::Full => "full",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "gates" => Ok(Engine::Gates),
            "full" => Ok(Engine::Full),
            other => Err(Error::invalid(format!("unknown engine '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyOptions {
    pub engine: Engine,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub gates: GateMode,
}

impl RamseyOptions {
    pub fn new(engine: Engine) -> Self {
        RamseyOptions {
            engine,
            propagation: PropagationConfig::default(),
            gates: GateMode::Ideal,
        }
    }
}

/// `S(t) = (1/8)(3 + cos(Omega_1 t) + 2 cos((Omega_1/2 + w+) t) + 2 cos((Omega_1/2 - w+) t))`.
pub fn analytic_signal(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters, t: f64) -> f64 {
    let (wp, _) = transition_frequencies(c, f, d, DressedOrder::Second);
    signal_from(d.omega1, wp, t)
}

fn signal_from(omega1: f64, wp: f64, t: f64) -> f64 {
    let h = 0.5 * omega1;
    (3.0 + (omega1 * t).cos() + 2.0 * ((h + wp) * t).cos() + 2.0 * ((h - wp) * t).cos()) / 8.0
}

/// Readout probability after free evolution for `t`.
pub fn ramsey_protocol(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    t: f64,
    opts: &RamseyOptions,
) -> Result<f64> {
    Ok(ramsey_signal(c, f, d, &[t], opts)?[0])
}

/// Readout probabilities at each of the nondecreasing `times`.
pub fn ramsey_signal(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    times: &[f64],
    opts: &RamseyOptions,
) -> Result<Vec<f64>> {
    c.validate()?;
    f.validate()?;
    d.validate()?;
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::invalid(format!("free-evolution time must be >= 0, got {t}")));
    }
    match opts.engine {
        Engine::Analytic => {
            let (wp, _) = transition_frequencies(c, f, d, DressedOrder::Second);
            Ok(times.iter().map(|&t| signal_from(d.omega1, wp, t)).collect())
        }
        Engine::Gates => gates_signal(c, f, d, times),
        Engine::Full => full_signal(c, f, d, times, opts),
    }
}

fn gates_signal(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters, times: &[f64]) -> Result<Vec<f64>> {
    let report = check_hierarchy(c, f, d);
    if report.grossly_violated() {
        let links: Vec<_> = report.warnings.iter().map(|w| format!("{} = {:.3}", w.link, w.ratio)).collect();
        return Err(Error::EngineMismatch(format!(
            "dressed-frame hierarchy violated ({}); use the full engine",
            links.join(", ")
        )));
    }
    let gates = GateSet::ideal();
    let psi0 = gates.initial_state();
    let v = dressed_basis().matrix();
    let hd = dressed_hamiltonian(c, f, d, DressedOrder::Second);
    let energies = [hd.entry(0, 0).re, hd.entry(1, 1).re, hd.entry(2, 2).re];
    let sz2 = spin_operators().sz2();
    Ok(times
        .iter()
        .map(|&t| {
            let evolve = SpinMatrix::from_diagonal(energies.map(|e| C64::from_polar(1.0, -e * t)));
            // back through U2 and the modulation part of U1 into the D frame
            let u_mod = expm_unchecked(&sz2, modulation_phase(d, t) + (d.base_frequency - c.zero_field_splitting) * t);
            let psi = (u_mod * second_frame(d, t).dagger() * v * evolve * v.dagger()).apply(&psi0);
            gates.read(&psi)
        })
        .collect())
}

fn full_signal(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    times: &[f64],
    opts: &RamseyOptions,
) -> Result<Vec<f64>> {
    let gates = GateSet::build(c, f, opts.gates, &opts.propagation)?;
    let psi0 = gates.initial_state();
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let states = propagate_sampled(c, f, d, &psi0, &sorted, &opts.propagation)?;
    let values: Vec<f64> = states
        .iter()
        .zip(&sorted)
        .map(|(psi, &t)| gates.read(&d_frame(c.zero_field_splitting, t).apply(psi)))
        .collect();
    Ok(times
        .iter()
        .map(|t| values[sorted.partition_point(|s| s < t)])
        .collect())
}

fn metadata(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters, engine: Engine) -> TraceMetadata {
    TraceMetadata {
        constants: Some(*c),
        drive: Some(*d),
        fields: Some(*f),
        engine: Some(engine.name().to_string()),
        ..Default::default()
    }
}

fn into_trace(values: Vec<f64>, times: Vec<f64>, sampling: Sampling, meta: TraceMetadata) -> Result<SignalTrace> {
    SignalTrace::new(times, values, sampling, meta).map_err(|e| match e {
        Error::InvalidParameter(m) => Error::EngineMismatch(format!("engine produced an invalid trace: {m}")),
        other => other,
    })
}

/// Signal on an arbitrary increasing grid of free-evolution times.
pub fn dense_trace(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    times: &[f64],
    opts: &RamseyOptions,
) -> Result<SignalTrace> {
    let values = ramsey_signal(c, f, d, times, opts)?;
    into_trace(values, times.to_vec(), Sampling::Dense, metadata(c, f, d, opts.engine))
}

/// `n` equally spaced times `k * span / (n - 1)`, `k = 0..n`.
pub fn uniform_times(span: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| span * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Times `n T` with `T = 2 pi / Omega_1`, `n = 0..=n_max`.
pub fn undersampled_times(d: &DriveParameters, n_max: usize) -> Vec<f64> {
    let period = d.modulation_period();
    (0..=n_max).map(|n| n as f64 * period).collect()
}

/// Signal sampled once per modulation period.
pub fn undersampled_trace(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    n_max: usize,
    opts: &RamseyOptions,
) -> Result<SignalTrace> {
    if n_max < 2 {
        return Err(Error::invalid(format!("n_max must be >= 2, got {n_max}")));
    }
    d.validate()?;
    let times = undersampled_times(d, n_max);
    let values = ramsey_signal(c, f, d, &times, opts)?;
    let sampling = Sampling::Undersampled {
        period_s: d.modulation_period(),
    };
    into_trace(values, times, sampling, metadata(c, f, d, opts.engine))
}

/// One row of a field scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    pub field: FieldEnvironment,
    /// Fitted under-sampled frequency, Hz.
    pub frequency_hz: f64,
    /// Shift relative to the zero-field reference, Hz.
    pub shift_hz: f64,
    pub shift_err_hz: f64,
}

/// Fits the under-sampled frequency for each environment and reports its
/// shift from the zero-field value. Points are evaluated in parallel.
pub fn frequency_shift_scan(
    c: &NvConstants,
    d: &DriveParameters,
    scan: &[FieldEnvironment],
    n_max: usize,
    opts: &RamseyOptions,
) -> Result<Vec<ShiftPoint>> {
    if scan.is_empty() {
        return Err(Error::invalid("scan must contain at least one environment"));
    }
    let fit = |f: &FieldEnvironment| -> Result<(f64, f64)> {
        let trace = undersampled_trace(c, f, d, n_max, opts)?;
        let s = fit_sinusoid(&trace)?;
        Ok((s.frequency_hz, s.frequency_err_hz))
    };
    let (f0, e0) = fit(&FieldEnvironment::zero())?;
    scan.par_iter()
        .map(|f| {
            let (freq, err) = if *f == FieldEnvironment::zero() { (f0, e0) } else { fit(f)? };
            Ok(ShiftPoint {
                field: *f,
                frequency_hz: freq,
                shift_hz: freq - f0,
                shift_err_hz: if *f == FieldEnvironment::zero() { 0.0 } else { err.hypot(e0) },
            })
        })
        .collect()
}
