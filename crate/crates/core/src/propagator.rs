// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Time-domain integration of `H0 + H1(t)`.
//!
//! Lab-frame propagation keeps the carrier and every counter-rotating term.
//! The rotating mode integrates the slow residual Hamiltonian after the
//! first frame change and maps the result back to the lab frame, so both
//! modes return lab-frame states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    drive_amplitude, first_frame, frequency_bound, lab_frequency_bound, lab_hamiltonian,
    rotating_frame_static, rotating_frequency_bound, DriveParameters, FieldEnvironment,
    NvConstants,
};
use crate::spin::{expm_unchecked, spin_operators, SpinMatrix, SpinState, NORM_TOL};

/// Guard on `dt * max_frequency`.
pub const RESOLUTION_LIMIT: f64 = 0.1;
/// Default lab-frame step.
pub const LAB_DEFAULT_DT: f64 = 5e-12;
/// Nominal rotating-frame step; shortened when the guard requires it.
pub const ROTATING_DEFAULT_DT: f64 = 1e-9;
/// Accumulated deviation tolerated before propagation aborts.
pub const DRIFT_LIMIT: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Piecewise-constant exponential at the step midpoint.
    #[default]
    MidpointExponential,
    /// Two-exponential fourth-order commutator-free scheme.
    FourthOrderCommutator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Lab,
    Rotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Step size in seconds; `None` picks the frame default.
    pub dt: Option<f64>,
    pub integrator: Integrator,
    /// Steps between norm/unitarity checks.
    pub unitarity_check_interval: usize,
    pub frame: Frame,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            dt: None,
            integrator: Integrator::MidpointExponential,
            unitarity_check_interval: 10_000,
            frame: Frame::Lab,
        }
    }
}

impl PropagationConfig {
    pub fn lab() -> Self {
        Self::default()
    }

    pub fn rotating() -> Self {
        PropagationConfig {
            frame: Frame::Rotating,
            ..Self::default()
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    fn frequency_bound(&self, c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> f64 {
        match self.frame {
            Frame::Lab => lab_frequency_bound(c, f, d),
            Frame::Rotating => rotating_frequency_bound(c, f, d),
        }
    }

    /// The step actually used: the explicit `dt`, or the frame default. In
    /// the rotating frame the 1 ns default is shortened to half the guard
    /// limit when strong drives require it.
    pub fn effective_dt(&self, c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> f64 {
        match (self.dt, self.frame) {
            (Some(dt), _) => dt,
            (None, Frame::Lab) => LAB_DEFAULT_DT,
            (None, Frame::Rotating) => {
                let bound = self.frequency_bound(c, f, d);
                ROTATING_DEFAULT_DT.min(0.5 * RESOLUTION_LIMIT / bound)
            }
        }
    }

    /// Checks `dt > 0` and the resolution guard; returns the step to use.
    pub fn validate(&self, c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> Result<f64> {
        let dt = self.effective_dt(c, f, d);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if self.unitarity_check_interval == 0 {
            return Err(Error::invalid("unitarity_check_interval must be >= 1"));
        }
        let product = dt * self.frequency_bound(c, f, d);
        if !(product < RESOLUTION_LIMIT) {
            return Err(Error::StepSizeTooCoarse { dt, product });
        }
        Ok(dt)
    }
}

/// A constant-amplitude resonant pulse `rabi * cos(frequency t + phase) Sx`
/// starting at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantPulse {
    pub rabi: f64,
    pub frequency: f64,
    pub phase: f64,
    pub duration: f64,
}

#[derive(Clone, Copy)]
enum Amplitude<'a> {
    PhaseModulated(&'a DriveParameters),
    Modulation(&'a DriveParameters),
    Carrier { rabi: f64, frequency: f64, phase: f64 },
}

/// `H(t) = static + amplitude(t) * coupling`, the shape shared by every mode.
struct Driven<'a> {
    h_static: SpinMatrix,
    coupling: SpinMatrix,
    amplitude: Amplitude<'a>,
}

impl<'a> Driven<'a> {
    fn new(c: &NvConstants, f: &FieldEnvironment, d: &'a DriveParameters, frame: Frame) -> Self {
        let ops = spin_operators();
        match frame {
            Frame::Lab => Driven {
                h_static: lab_hamiltonian(c, f),
                coupling: ops.sx,
                amplitude: Amplitude::PhaseModulated(d),
            },
            Frame::Rotating => Driven {
                h_static: rotating_frame_static(c, f, d),
                coupling: ops.sz2(),
                amplitude: Amplitude::Modulation(d),
            },
        }
    }

    #[inline]
    fn at(&self, t: f64) -> SpinMatrix {
        let a = match self.amplitude {
            Amplitude::PhaseModulated(d) => drive_amplitude(d, t),
            Amplitude::Modulation(d) => -2.0 * d.omega2 * (d.omega1 * t).cos(),
            Amplitude::Carrier { rabi, frequency, phase } => rabi * (frequency * t + phase).cos(),
        };
        self.h_static + self.coupling * a
    }

    /// One-step propagator over `[t, t + h]`.
    #[inline]
    fn step(&self, integrator: Integrator, t: f64, h: f64) -> SpinMatrix {
        match integrator {
            Integrator::MidpointExponential => expm_unchecked(&self.at(t + 0.5 * h), h),
            Integrator::FourthOrderCommutator => {
                let s3 = 3f64.sqrt();
                let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
                let (a1, a2) = (0.25 - s3 / 6.0, 0.25 + s3 / 6.0);
                let h1 = self.at(t + c1 * h);
                let h2 = self.at(t + c2 * h);
                let first = expm_unchecked(&(h1 * a2 + h2 * a1), h);
                let second = expm_unchecked(&(h1 * a1 + h2 * a2), h);
                second * first
            }
        }
    }
}

/// Anything a step unitary can act on.
trait Evolving: Copy {
    fn evolve(&self, u: &SpinMatrix) -> Self;
    fn drift(&self) -> f64;
}

impl Evolving for SpinState {
    fn evolve(&self, u: &SpinMatrix) -> Self {
        u.apply(self)
    }
    fn drift(&self) -> f64 {
        (self.norm() - 1.0).abs()
    }
}

impl Evolving for SpinMatrix {
    fn evolve(&self, u: &SpinMatrix) -> Self {
        *u * *self
    }
    fn drift(&self) -> f64 {
        self.unitarity_deviation()
    }
}

fn check_drift<T: Evolving>(x: &T) -> Result<()> {
    let deviation = x.drift();
    if !(deviation < DRIFT_LIMIT) {
        return Err(Error::UnitarityLost { deviation });
    }
    Ok(())
}

/// Integrates on the fixed lattice `t0 + k dt`. A sample between lattice
/// points is reached by a shorter branch step that the main trajectory does
/// not continue from, so every sample is independent of which other samples
/// were requested.
struct Stepper<'a> {
    h: Driven<'a>,
    integrator: Integrator,
    dt: f64,
    interval: usize,
}

impl<'a> Stepper<'a> {
    fn run<T: Evolving>(&self, x0: T, t0: f64, times: &[f64], out: &mut Vec<T>) -> Result<()> {
        let mut x = x0;
        let mut k: u64 = 0;
        let mut since_check = 0usize;
        for &ts in times {
            let pos = (ts - t0) / self.dt;
            let nearest = pos.round();
            let target = if (pos - nearest).abs() < 1e-9 { nearest } else { pos.floor() };
            let target = target.max(0.0) as u64;
            while k < target {
                let t = t0 + k as f64 * self.dt;
                x = x.evolve(&self.h.step(self.integrator, t, self.dt));
                k += 1;
                since_check += 1;
                if since_check >= self.interval {
                    since_check = 0;
                    check_drift(&x)?;
                }
            }
            let tk = t0 + k as f64 * self.dt;
            let rest = ts - tk;
            if rest > 1e-9 * self.dt {
                out.push(x.evolve(&self.h.step(self.integrator, tk, rest)));
            } else {
                out.push(x);
            }
        }
        if let Some(last) = out.last() {
            check_drift(last)?;
        }
        Ok(())
    }
}

fn stepper<'a>(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &'a DriveParameters,
    cfg: &PropagationConfig,
) -> Result<Stepper<'a>> {
    c.validate()?;
    f.validate()?;
    d.validate()?;
    let dt = cfg.validate(c, f, d)?;
    Ok(Stepper {
        h: Driven::new(c, f, d, cfg.frame),
        integrator: cfg.integrator,
        dt,
        interval: cfg.unitarity_check_interval,
    })
}

fn to_internal(frame: Frame, d: &DriveParameters, t: f64, psi: &SpinState) -> SpinState {
    match frame {
        Frame::Lab => *psi,
        Frame::Rotating => first_frame(d, t).apply(psi),
    }
}

fn to_lab(frame: Frame, d: &DriveParameters, t: f64, psi: &SpinState) -> SpinState {
    match frame {
        Frame::Lab => *psi,
        Frame::Rotating => first_frame(d, t).dagger().apply(psi),
    }
}

fn check_initial(state0: &SpinState) -> Result<()> {
    let dev = (state0.norm() - 1.0).abs();
    if dev > NORM_TOL {
        return Err(Error::invalid(format!("initial state norm deviates by {dev:e}")));
    }
    Ok(())
}

fn validate_times(times: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &t in times {
        if !t.is_finite() || t < prev {
            return Err(Error::invalid(format!(
                "sample times must be finite, >= 0 and nondecreasing (got {t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Evolves `state0` from `t = 0` to `t_final` (drive phase referenced to 0).
pub fn propagate(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    state0: &SpinState,
    t_final: f64,
    cfg: &PropagationConfig,
) -> Result<SpinState> {
    let states = propagate_sampled(c, f, d, state0, &[t_final], cfg)?;
    Ok(states[0])
}

/// Evolves `state0` from `t = 0` and records the lab-frame state at each
/// of the nondecreasing `times`. One trajectory serves every sample.
pub fn propagate_sampled(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    state0: &SpinState,
    times: &[f64],
    cfg: &PropagationConfig,
) -> Result<Vec<SpinState>> {
    check_initial(state0)?;
    validate_times(times)?;
    let s = stepper(c, f, d, cfg)?;
    let mut out = Vec::with_capacity(times.len());
    s.run(to_internal(cfg.frame, d, 0.0, state0), 0.0, times, &mut out)?;
    Ok(times
        .iter()
        .zip(out)
        .map(|(&t, psi)| to_lab(cfg.frame, d, t, &psi))
        .collect())
}

/// Full lab-frame propagator over `[t0, t1]`.
pub fn propagate_unitary(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    t0: f64,
    t1: f64,
    cfg: &PropagationConfig,
) -> Result<SpinMatrix> {
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::invalid(format!("need t1 >= t0, got [{t0}, {t1}]")));
    }
    let s = stepper(c, f, d, cfg)?;
    let mut out = Vec::with_capacity(1);
    s.run(SpinMatrix::identity(), t0, &[t1], &mut out)?;
    let u = out[0];
    Ok(match cfg.frame {
        Frame::Lab => u,
        Frame::Rotating => first_frame(d, t1).dagger() * u * first_frame(d, t0),
    })
}

/// Lab-frame propagator of a single resonant pulse over `[0, duration]`,
/// with the static fields of `f` present.
pub fn propagate_pulse_unitary(
    c: &NvConstants,
    f: &FieldEnvironment,
    pulse: &ResonantPulse,
    cfg: &PropagationConfig,
) -> Result<SpinMatrix> {
    c.validate()?;
    f.validate()?;
    if cfg.frame != Frame::Lab {
        return Err(Error::invalid("pulse propagation is lab-frame only"));
    }
    let finite = [pulse.rabi, pulse.frequency, pulse.phase, pulse.duration];
    if !finite.iter().all(|v| v.is_finite()) || pulse.duration < 0.0 || pulse.rabi < 0.0 {
        return Err(Error::invalid("pulse needs finite values, rabi >= 0 and duration >= 0"));
    }
    let dt = cfg.dt.unwrap_or(LAB_DEFAULT_DT);
    let product = dt * frequency_bound(c, f, pulse.rabi);
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(product < RESOLUTION_LIMIT) {
        return Err(Error::StepSizeTooCoarse { dt, product });
    }
    let s = Stepper {
        h: Driven {
            h_static: lab_hamiltonian(c, f),
            coupling: spin_operators().sx,
            amplitude: Amplitude::Carrier {
                rabi: pulse.rabi,
                frequency: pulse.frequency,
                phase: pulse.phase,
            },
        },
        integrator: cfg.integrator,
        dt,
        interval: cfg.unitarity_check_interval.max(1),
    };
    let mut out = Vec::with_capacity(1);
    s.run(SpinMatrix::identity(), 0.0, &[pulse.duration], &mut out)?;
    Ok(out[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{frame_transformations, DriveParameters};
    use crate::spin::{c as cx, dressed_basis, Level};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn nv() -> NvConstants {
        NvConstants::default()
    }

    #[test]
    fn undriven_zero_state_is_stationary() {
        let c = nv();
        // omega1 must stay positive; a tiny drive far below resolution
        let d = DriveParameters::new(1e-3, 0.0, c.zero_field_splitting).unwrap();
        let out = propagate(&c, &FieldEnvironment::zero(), &d, &SpinState::zero(), 20e-9, &PropagationConfig::lab()).unwrap();
        assert!((out.population(Level::Zero) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_at_zero_duration() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let u = propagate_unitary(&c, &FieldEnvironment::zero(), &d, 3e-9, 3e-9, &PropagationConfig::lab()).unwrap();
        assert_eq!(u, SpinMatrix::identity());
    }

    #[test]
    fn near_zero_drive_gives_diagonal_phases() {
        let c = nv();
        let d = DriveParameters::new(1e-6, 0.0, c.zero_field_splitting).unwrap();
        let t = 10.0e-9;
        let u = propagate_unitary(&c, &FieldEnvironment::zero(), &d, 0.0, t, &PropagationConfig::lab()).unwrap();
        let p = Complex64::from_polar(1.0, -c.zero_field_splitting * t);
        let expect = SpinMatrix::from_diagonal([p, cx(1.0, 0.0), p]);
        assert!((u - expect).max_norm() < 1e-9);
    }

    #[test]
    fn composition() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::zero().with_b([0.0, 0.0, 5e-6]).with_e([300.0, 0.0, 0.0]);
        let cfg = PropagationConfig::lab();
        let (t0, t1, t2) = (0.0, 7.5e-9, 20e-9);
        let a = propagate_unitary(&c, &f, &d, t0, t1, &cfg).unwrap();
        let b = propagate_unitary(&c, &f, &d, t1, t2, &cfg).unwrap();
        let ab = propagate_unitary(&c, &f, &d, t0, t2, &cfg).unwrap();
        assert!((b * a - ab).max_norm() < 1e-7);
        assert!(ab.unitarity_deviation() < 1e-9);
    }

    #[test]
    fn rabi_pi_time() {
        // RWA drive (Omega_1/2) Sx is (Omega_1/2) sigma_x on {|0>, bright}:
        // P0(t) = cos^2(Omega_1 t / 2), first zero at pi / Omega_1
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 0.0).unwrap();
        let t_pi = PI / d.omega1;
        let cfg = PropagationConfig::lab();
        let times: Vec<f64> = (0..=40).map(|k| t_pi * (0.8 + 0.01 * k as f64)).collect();
        let states = propagate_sampled(&c, &FieldEnvironment::zero(), &d, &SpinState::zero(), &times, &cfg).unwrap();
        let (imin, pmin) = states
            .iter()
            .map(|s| s.population(Level::Zero))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, p)| if p < acc.1 { (i, p) } else { acc });
        assert!(pmin < 2e-3, "min P0 = {pmin}");
        assert!((times[imin] / t_pi - 1.0).abs() <= 0.011);
        for (t, s) in times.iter().zip(&states) {
            let rwa = (0.5 * d.omega1 * t).cos().powi(2);
            assert!((s.population(Level::Zero) - rwa).abs() < 0.01);
        }
    }

    #[test]
    fn norm_preserved_over_five_microseconds() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::zero().with_e([1e3, 0.0, 500.0]);
        let out = propagate(&c, &f, &d, &SpinState::zero(), 5e-6, &PropagationConfig::lab()).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn guard_rejects_coarse_steps() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let cfg = PropagationConfig::lab().with_dt(1e-10);
        let e = propagate(&c, &FieldEnvironment::zero(), &d, &SpinState::zero(), 1e-9, &cfg).unwrap_err();
        assert!(matches!(e, Error::StepSizeTooCoarse { .. }));
    }

    #[test]
    fn step_halving_is_self_consistent() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::zero();
        let halve = |cfg: PropagationConfig, t: f64| {
            let a = propagate(&c, &f, &d, &SpinState::zero(), t, &cfg.with_dt(5e-12)).unwrap();
            let b = propagate(&c, &f, &d, &SpinState::zero(), t, &cfg.with_dt(2.5e-12)).unwrap();
            1.0 - a.fidelity(&b)
        };
        let cf4 = PropagationConfig::lab().with_integrator(Integrator::FourthOrderCommutator);
        assert!(halve(cf4, 100e-9) < 1e-8);
        // the second-order default only meets this on short spans
        assert!(halve(PropagationConfig::lab(), 5e-9) < 1e-8);
    }

    #[test]
    fn integrator_orders() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::zero();
        let t = 5e-9;
        let cf4 = PropagationConfig::lab().with_integrator(Integrator::FourthOrderCommutator);
        let reference = propagate(&c, &f, &d, &SpinState::zero(), t, &cf4.with_dt(0.625e-12)).unwrap();
        let err = |cfg: PropagationConfig, dt: f64| {
            let s = propagate(&c, &f, &d, &SpinState::zero(), t, &cfg.with_dt(dt)).unwrap();
            (s.0 - reference.0).norm()
        };
        let order4 = (err(cf4, 5e-12) / err(cf4, 2.5e-12)).log2();
        assert!(order4 > 3.5, "fourth-order scheme observed order {order4}");
        let lab = PropagationConfig::lab();
        let order2 = (err(lab, 5e-12) / err(lab, 2.5e-12)).log2();
        assert!((order2 - 2.0).abs() < 0.3, "midpoint observed order {order2}");
    }

    #[test]
    fn samples_do_not_depend_on_other_samples() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::ex(500.0);
        let cfg = PropagationConfig::lab();
        let dense: Vec<f64> = (0..=60).map(|k| k as f64 * 0.8333e-9).collect();
        let all = propagate_sampled(&c, &f, &d, &SpinState::zero(), &dense, &cfg).unwrap();
        for &i in &[0usize, 7, 31, 60] {
            let one = propagate(&c, &f, &d, &SpinState::zero(), dense[i], &cfg).unwrap();
            assert_eq!(one, all[i]);
        }
    }

    #[test]
    fn deterministic() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::ex(1e3);
        let cfg = PropagationConfig::lab();
        let a = propagate(&c, &f, &d, &SpinState::zero(), 50e-9, &cfg).unwrap();
        let b = propagate(&c, &f, &d, &SpinState::zero(), 50e-9, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dressed_populations_constant_in_doubly_rotating_frame() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let basis = dressed_basis();
        let times: Vec<f64> = (1..=40).map(|k| k as f64 * 25e-9).collect();
        let states = propagate_sampled(&c, &FieldEnvironment::zero(), &d, &basis.plus_d, &times, &PropagationConfig::lab()).unwrap();
        for (t, s) in times.iter().zip(&states) {
            let (u1, u2) = frame_transformations(&d, *t);
            let dressed = basis.populations(&(u2 * u1).apply(s));
            assert!((dressed[0] - 1.0).abs() < 0.01, "t = {t:e}: {dressed:?}");
        }
    }

    #[test]
    fn rotating_mode_tracks_lab_frame() {
        let c = nv();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let f = FieldEnvironment::ex(1e3);
        let t = 300e-9;
        let lab = propagate(&c, &f, &d, &SpinState::zero(), t, &PropagationConfig::lab()).unwrap();
        let rot = propagate(&c, &f, &d, &SpinState::zero(), t, &PropagationConfig::rotating()).unwrap();
        // Bloch-Siegert residue of order Omega_1 / D
        for l in [Level::Plus, Level::Zero, Level::Minus] {
            assert!((lab.population(l) - rot.population(l)).abs() < 0.02);
        }
        let u = propagate_unitary(&c, &f, &d, 0.0, t, &PropagationConfig::rotating()).unwrap();
        assert!((u.apply(&SpinState::zero()).0 - rot.0).norm() < 1e-9);
    }
}
