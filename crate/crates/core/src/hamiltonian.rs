// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Lab-frame NV Hamiltonian, phase-modulated drive and the analytic
//! dressed-frame chain.
//!
//! All frequencies are angular (rad/s). Electric fields are in V/cm and
//! magnetic fields in tesla; dipole moments are rad/s per (V/cm).

use std::f64::consts::TAU;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{c, dressed_basis, expm_unchecked, spin_operators, SpinMatrix};

/// NV ground-state constants, angular units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvConstants {
    /// Zero-field splitting `D`, rad/s.
    pub zero_field_splitting: f64,
    /// Axial dipole moment, rad/s per (V/cm).
    pub d_par: f64,
    /// Non-axial dipole moment, rad/s per (V/cm).
    pub d_perp: f64,
    /// Electron gyromagnetic ratio, rad/s per tesla.
    pub gamma: f64,
}

impl Default for NvConstants {
    fn default() -> Self {
        NvConstants {
            zero_field_splitting: TAU * 2.87e9,
            d_par: TAU * 0.35,
            d_perp: TAU * 17.0,
            gamma: TAU * 28.03e9,
        }
    }
}

impl NvConstants {
    /// Builds constants from ordinary-frequency values (Hz, Hz cm/V, Hz/T).
    pub fn from_hz(d_hz: f64, d_par_hz: f64, d_perp_hz: f64, gamma_hz_per_t: f64) -> Result<Self> {
        let c = NvConstants {
            zero_field_splitting: TAU * d_hz,
            d_par: TAU * d_par_hz,
            d_perp: TAU * d_perp_hz,
            gamma: TAU * gamma_hz_per_t,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("zero_field_splitting", self.zero_field_splitting),
            ("d_par", self.d_par),
            ("d_perp", self.d_perp),
            ("gamma", self.gamma),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Static magnetic (tesla) and electric (V/cm) fields in the NV frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldEnvironment {
    pub b: [f64; 3],
    pub e: [f64; 3],
}

impl FieldEnvironment {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with_b(mut self, b: [f64; 3]) -> Self {
        self.b = b;
        self
    }

    pub fn with_e(mut self, e: [f64; 3]) -> Self {
        self.e = e;
        self
    }

    pub fn bz(bz: f64) -> Self {
        Self::zero().with_b([0.0, 0.0, bz])
    }

    pub fn ex(ex: f64) -> Self {
        Self::zero().with_e([ex, 0.0, 0.0])
    }

    pub fn ez(ez: f64) -> Self {
        Self::zero().with_e([0.0, 0.0, ez])
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.iter().chain(self.e.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("field components must be finite"))
        }
    }

    pub(crate) fn b_vec(&self) -> Vector3<f64> {
        Vector3::from(self.b)
    }

    pub(crate) fn e_vec(&self) -> Vector3<f64> {
        Vector3::from(self.e)
    }
}

/// Continuous phase-modulated drive settings, angular units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParameters {
    /// Rabi amplitude `Omega_1`.
    pub omega1: f64,
    /// Phase-modulation strength `Omega_2`.
    pub omega2: f64,
    /// Carrier frequency; set to `D` for resonance.
    pub base_frequency: f64,
}

impl DriveParameters {
    pub fn new(omega1: f64, omega2: f64, base_frequency: f64) -> Result<Self> {
        let d = DriveParameters {
            omega1,
            omega2,
            base_frequency,
        };
        d.validate()?;
        Ok(d)
    }

    /// Resonant drive (`base_frequency = D`).
    pub fn resonant(c: &NvConstants, omega1: f64, omega2: f64) -> Result<Self> {
        Self::new(omega1, omega2, c.zero_field_splitting)
    }

    /// Resonant drive from MHz values, e.g. `(16.0, 2.0)`.
    pub fn resonant_mhz(c: &NvConstants, omega1_mhz: f64, omega2_mhz: f64) -> Result<Self> {
        Self::resonant(c, TAU * omega1_mhz * 1e6, TAU * omega2_mhz * 1e6)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega1.is_finite() && self.omega1 > 0.0) {
            return Err(Error::invalid(format!("omega1 must be > 0, got {}", self.omega1)));
        }
        if !(self.omega2.is_finite() && self.omega2 >= 0.0) {
            return Err(Error::invalid(format!("omega2 must be >= 0, got {}", self.omega2)));
        }
        if self.omega2 >= self.omega1 {
            return Err(Error::invalid(format!(
                "drive hierarchy violated: omega1 ({:e}) must exceed omega2 ({:e})",
                self.omega1, self.omega2
            )));
        }
        if !self.base_frequency.is_finite() {
            return Err(Error::invalid("base_frequency must be finite"));
        }
        Ok(())
    }

    /// Modulation period `2 pi / Omega_1`, the under-sampling interval.
    pub fn modulation_period(&self) -> f64 {
        TAU / self.omega1
    }
}

/// Quasi-static fluctuations of `D` and of the Rabi amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoisePerturbation {
    pub delta_d: f64,
    pub delta_omega1: f64,
}

impl NoisePerturbation {
    /// Logs a warning when either fluctuation exceeds `omega1 / 10`, where
    /// the perturbative expressions stop being meaningful.
    pub fn check(&self, omega1: f64) -> bool {
        let ok = self.delta_d.abs() < omega1 / 10.0 && self.delta_omega1.abs() < omega1 / 10.0;
        if !ok {
            warn!(
                "noise perturbation ({:e}, {:e}) not small against omega1/10 = {:e}",
                self.delta_d,
                self.delta_omega1,
                omega1 / 10.0
            );
        }
        ok
    }
}

/// Accuracy of the analytic dressed-frame model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DressedOrder {
    /// `(Omega_2/2) S_zd + (d_par Ez/2 + 3 d_perp Ex/2) S_zd^2`.
    #[default]
    First,
    /// Adds the `Delta^2 / Omega_2` correction to the `S_zd` coefficient.
    Second,
}

/// One violated link of the `D >> Omega_1 >> Omega_2 >> Delta` chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyWarning {
    pub link: String,
    pub ratio: f64,
    pub required: f64,
}

/// Ratios of the frequency hierarchy the dressed model relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub d_over_omega1: f64,
    pub omega1_over_omega2: f64,
    pub omega2_over_delta: f64,
    pub warnings: Vec<HierarchyWarning>,
}

impl HierarchyReport {
    pub fn holds(&self) -> bool {
        self.warnings.is_empty()
    }

    /// True when some link is inverted outright (ratio below 1), as opposed
    /// to merely weak.
    pub fn grossly_violated(&self) -> bool {
        self.d_over_omega1 < 1.0 || self.omega1_over_omega2 < 1.0 || self.omega2_over_delta < 1.0
    }
}

/// Required ratios for the three links of the hierarchy.
pub const HIERARCHY_D_OVER_OMEGA1: f64 = 50.0;
pub const HIERARCHY_OMEGA1_OVER_OMEGA2: f64 = 5.0;
pub const HIERARCHY_OMEGA2_OVER_DELTA: f64 = 10.0;

pub fn check_hierarchy(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> HierarchyReport {
    let delta = detuning_delta(c, f, d);
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::INFINITY } else { a / b };
    let d_over_omega1 = ratio(c.zero_field_splitting, d.omega1);
    let omega1_over_omega2 = ratio(d.omega1, d.omega2);
    let omega2_over_delta = ratio(d.omega2, delta);
    let mut warnings = Vec::new();
    let links = [
        ("D/omega1", d_over_omega1, HIERARCHY_D_OVER_OMEGA1),
        ("omega1/omega2", omega1_over_omega2, HIERARCHY_OMEGA1_OVER_OMEGA2),
        ("omega2/delta", omega2_over_delta, HIERARCHY_OMEGA2_OVER_DELTA),
    ];
    for (link, r, required) in links {
        if !(r >= required) {
            warnings.push(HierarchyWarning {
                link: link.to_string(),
                ratio: r,
                required,
            });
        }
    }
    HierarchyReport {
        d_over_omega1,
        omega1_over_omega2,
        omega2_over_delta,
        warnings,
    }
}

/// `H0 = (D + d_par Ez) Sz^2 + gamma B.S - d_perp Ex (Sx^2 - Sy^2) + d_perp Ey (SxSy + SySx)`.
pub fn lab_hamiltonian(c: &NvConstants, f: &FieldEnvironment) -> SpinMatrix {
    let ops = spin_operators();
    let [bx, by, bz] = f.b;
    let [ex, ey, ez] = f.e;
    ops.sz2() * (c.zero_field_splitting + c.d_par * ez)
        + (ops.sx * bx + ops.sy * by + ops.sz * bz) * c.gamma
        - ops.sx2_minus_sy2() * (c.d_perp * ex)
        + ops.sxsy_plus_sysx() * (c.d_perp * ey)
}

/// Instantaneous carrier phase `f t + (2 Omega_2 / Omega_1) sin(Omega_1 t)`.
pub fn drive_phase(d: &DriveParameters, t: f64) -> f64 {
    d.base_frequency * t + modulation_phase(d, t)
}

/// The modulation part `(2 Omega_2 / Omega_1) sin(Omega_1 t)` of the phase.
pub fn modulation_phase(d: &DriveParameters, t: f64) -> f64 {
    2.0 * d.omega2 / d.omega1 * (d.omega1 * t).sin()
}

/// Drive amplitude multiplying `Sx` at time `t`.
pub fn drive_amplitude(d: &DriveParameters, t: f64) -> f64 {
    d.omega1 * drive_phase(d, t).cos()
}

/// `H1(t) = Omega_1 cos(f t + (2 Omega_2/Omega_1) sin(Omega_1 t)) Sx`.
pub fn drive_hamiltonian(d: &DriveParameters, t: f64) -> SpinMatrix {
    spin_operators().sx * drive_amplitude(d, t)
}

/// Second-order detuning `Delta` from static fields.
pub fn detuning_delta(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> f64 {
    detuning_delta2(c, f, d, &NoisePerturbation::default())
}

/// `Delta_2 = dOmega1/2 + (gamma Bz)^2/Omega_1 + (dD + d_par Ez - d_perp Ex)^2/(4 Omega_1) + (d_perp Ey)^2/Omega_1`.
pub fn detuning_delta2(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    n: &NoisePerturbation,
) -> f64 {
    let [ex, ey, ez] = f.e;
    let bz = f.b[2];
    let zeeman = c.gamma * bz;
    let axial = n.delta_d + c.d_par * ez - c.d_perp * ex;
    let transverse = c.d_perp * ey;
    n.delta_omega1 / 2.0
        + zeeman * zeeman / d.omega1
        + axial * axial / (4.0 * d.omega1)
        + transverse * transverse / d.omega1
}

/// Linear Stark coefficient `d_par Ez / 2 + 3 d_perp Ex / 2` of `S_zd^2`.
pub fn stark_coefficient(c: &NvConstants, f: &FieldEnvironment) -> f64 {
    0.5 * c.d_par * f.e[2] + 1.5 * c.d_perp * f.e[0]
}

/// Coefficient of `S_zd` in the dressed Hamiltonian.
pub fn dressed_splitting(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters, order: DressedOrder) -> f64 {
    match order {
        DressedOrder::First => d.omega2 / 2.0,
        DressedOrder::Second => {
            let delta = detuning_delta(c, f, d);
            if d.omega2 > 0.0 {
                d.omega2 / 2.0 + delta * delta / d.omega2
            } else {
                // the perturbative correction diverges; fall back to the
                // undriven-splitting limit
                delta
            }
        }
    }
}

fn warn_hierarchy(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) {
    let report = check_hierarchy(c, f, d);
    for w in &report.warnings {
        warn!(
            "dressed-frame hierarchy weak: {} = {:.3e} (want >= {})",
            w.link, w.ratio, w.required
        );
    }
}

/// Dressed-frame Hamiltonian in the dressed basis `(|+1>_d, |0>_d, |-1>_d)`;
/// diagonal with entries `(a + b, 0, -a + b)` for `a` the `S_zd` coefficient
/// and `b` the Stark coefficient.
pub fn dressed_hamiltonian(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    order: DressedOrder,
) -> SpinMatrix {
    warn_hierarchy(c, f, d);
    let a = dressed_splitting(c, f, d, order);
    let b = stark_coefficient(c, f);
    SpinMatrix::from_real_diagonal([a + b, 0.0, -a + b])
}

/// The dressed Hamiltonian re-expressed on the bare basis, `V H_d V^dagger`
/// with `V` the dressed change-of-basis matrix.
pub fn dressed_hamiltonian_bare(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    order: DressedOrder,
) -> SpinMatrix {
    let v = dressed_basis().matrix();
    v * dressed_hamiltonian(c, f, d, order) * v.dagger()
}

/// `(omega_plus, omega_minus)`: transitions `|0>_d <-> |+-1>_d`.
pub fn transition_frequencies(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    order: DressedOrder,
) -> (f64, f64) {
    let a = dressed_splitting(c, f, d, order);
    let b = stark_coefficient(c, f);
    (a + b, a - b)
}

/// Frame unitaries `U1 = exp[i phase(t) Sz^2]` and `U2 = exp[i (Omega_1 t / 2) Sx]`.
pub fn frame_transformations(d: &DriveParameters, t: f64) -> (SpinMatrix, SpinMatrix) {
    (first_frame(d, t), second_frame(d, t))
}

pub(crate) fn first_frame(d: &DriveParameters, t: f64) -> SpinMatrix {
    let p = num_complex::Complex64::from_polar(1.0, drive_phase(d, t));
    SpinMatrix::from_diagonal([p, c(1.0, 0.0), p])
}

pub(crate) fn second_frame(d: &DriveParameters, t: f64) -> SpinMatrix {
    // exp(i theta Sx) = exp(-i Sx (-theta))
    expm_unchecked(&spin_operators().sx, -0.5 * d.omega1 * t)
}

/// Slow residual Hamiltonian after the first frame change (carrier
/// removed by the RWA on the `D` scale):
/// `(D - f + d_par Ez) Sz^2 + gamma Bz Sz - d_perp Ex (Sx^2 - Sy^2)
///  + d_perp Ey (SxSy + SySx) + (Omega_1/2) Sx - 2 Omega_2 cos(Omega_1 t) Sz^2`.
pub fn rotating_frame_hamiltonian(
    c: &NvConstants,
    f: &FieldEnvironment,
    d: &DriveParameters,
    t: f64,
) -> SpinMatrix {
    rotating_frame_static(c, f, d) + rotating_frame_modulation(d, t)
}

pub(crate) fn rotating_frame_static(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> SpinMatrix {
    let ops = spin_operators();
    let [ex, ey, ez] = f.e;
    ops.sz2() * (c.zero_field_splitting - d.base_frequency + c.d_par * ez)
        + ops.sz * (c.gamma * f.b[2])
        - ops.sx2_minus_sy2() * (c.d_perp * ex)
        + ops.sxsy_plus_sysx() * (c.d_perp * ey)
        + ops.sx * (0.5 * d.omega1)
}

pub(crate) fn rotating_frame_modulation(d: &DriveParameters, t: f64) -> SpinMatrix {
    spin_operators().sz2() * (-2.0 * d.omega2 * (d.omega1 * t).cos())
}

/// Upper bound on the spectral radius of the lab Hamiltonian: the fastest
/// angular frequency the integrator has to resolve.
pub fn lab_frequency_bound(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> f64 {
    frequency_bound(c, f, d.omega1)
}

/// Lab bound for an arbitrary `Sx` drive amplitude.
pub(crate) fn frequency_bound(c: &NvConstants, f: &FieldEnvironment, rabi: f64) -> f64 {
    let b = f.b_vec().norm();
    let e = f.e_vec();
    (c.zero_field_splitting + c.d_par * e[2]).abs()
        + c.gamma * b
        + 2.0 * c.d_perp * (e[0].hypot(e[1]))
        + rabi.abs()
}

/// Same bound for the rotating-frame residual Hamiltonian.
pub fn rotating_frequency_bound(c: &NvConstants, f: &FieldEnvironment, d: &DriveParameters) -> f64 {
    let e = f.e_vec();
    (c.zero_field_splitting - d.base_frequency + c.d_par * e[2]).abs()
        + c.gamma * f.b[2].abs()
        + 2.0 * c.d_perp * (e[0].hypot(e[1]))
        + 0.5 * d.omega1
        + 2.0 * d.omega2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{dressed_basis, SpinState};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn default_constants() -> NvConstants {
        NvConstants::default()
    }

    #[test]
    fn zero_fields_give_d_sz2() {
        let c = default_constants();
        let h = lab_hamiltonian(&c, &FieldEnvironment::zero());
        let (w, _) = h.eigh().unwrap();
        let d = c.zero_field_splitting;
        assert!(w[0].abs() < 1e-3);
        assert!((w[1] - d).abs() < 1e-3 && (w[2] - d).abs() < 1e-3);
        assert!((h - SpinMatrix::from_real_diagonal([d, 0.0, d])).max_norm() == 0.0);
    }

    #[test]
    fn zeeman_splitting_is_two_gamma_bz() {
        let c = default_constants();
        let bz = 16e-6;
        let h = lab_hamiltonian(&c, &FieldEnvironment::bz(bz));
        let split = (h.entry(0, 0) - h.entry(2, 2)).re;
        assert!((split - 2.0 * c.gamma * bz).abs() < 1e-6 * split);
    }

    #[test]
    fn transverse_e_couples_plus_minus() {
        let c = default_constants();
        let h = lab_hamiltonian(&c, &FieldEnvironment::ex(1e3));
        let coupling = h.entry(0, 2).norm();
        assert!((coupling - c.d_perp * 1e3).abs() < 1e-9);
        assert_eq!(h.entry(0, 1).norm(), 0.0);
    }

    #[test]
    fn drive_at_origin_and_full_period() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let h0 = drive_hamiltonian(&d, 0.0);
        assert!((h0 - spin_operators().sx * d.omega1).max_norm() < 1e-9);
        let t = TAU / d.omega1;
        let expect = d.base_frequency * t;
        assert!((drive_phase(&d, t) - expect).abs() < 1e-6);

        let d0 = DriveParameters::resonant_mhz(&c, 16.0, 0.0).unwrap();
        let t = 3.3e-9;
        let amp = drive_amplitude(&d0, t);
        assert!((amp - d0.omega1 * (c.zero_field_splitting * t).cos()).abs() < 1e-6);
    }

    #[test]
    fn delta_values() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 50.0, 10.0).unwrap();
        assert_eq!(detuning_delta(&c, &FieldEnvironment::zero(), &d), 0.0);
        // gamma Bz = 448.48 kHz; (448.48 kHz)^2 / 50 MHz = 4.0227 kHz
        let delta = detuning_delta(&c, &FieldEnvironment::bz(16e-6), &d);
        let expect = TAU * 448.48e3_f64.powi(2) / 50e6;
        assert!((delta - expect).abs() < 1e-9 * expect);
        assert!((delta / TAU - 4022.7).abs() < 0.1);

        // Ey weight 1 against the (Ex, Ez) weight 1/4
        let ey = detuning_delta(&c, &FieldEnvironment::zero().with_e([0.0, 1e3, 0.0]), &d);
        let ex = detuning_delta(&c, &FieldEnvironment::ex(1e3), &d);
        assert!((ey / ex - 4.0).abs() < 1e-12);
    }

    #[test]
    fn delta2_values() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 50.0, 10.0).unwrap();
        let z = FieldEnvironment::zero();
        assert_eq!(detuning_delta2(&c, &z, &d, &NoisePerturbation::default()), 0.0);
        let n = NoisePerturbation { delta_d: 0.0, delta_omega1: TAU * 10e3 };
        assert!((detuning_delta2(&c, &z, &d, &n) - TAU * 5e3).abs() < 1e-9);
        let n = NoisePerturbation { delta_d: TAU * 100e3, delta_omega1: 0.0 };
        assert!((detuning_delta2(&c, &z, &d, &n) - TAU * 50.0).abs() < 1e-9);
    }

    #[test]
    fn dressed_hamiltonian_limits() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let h = dressed_hamiltonian(&c, &FieldEnvironment::zero(), &d, DressedOrder::First);
        let sz = spin_operators().sz;
        assert!((h - sz * (d.omega2 / 2.0)).max_norm() == 0.0);
        let gap = (h.entry(0, 0) - h.entry(1, 1)).re;
        assert!((gap - d.omega2 / 2.0).abs() < 1e-9);

        let f = FieldEnvironment::ex(1e3);
        let (wp, _) = transition_frequencies(&c, &f, &d, DressedOrder::First);
        assert!(((wp - d.omega2 / 2.0) - TAU * 25.5e3).abs() < 1e-6);
    }

    #[test]
    fn transition_frequency_values() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 10.0).unwrap();
        let (wp, wm) = transition_frequencies(&c, &FieldEnvironment::zero(), &d, DressedOrder::First);
        assert_eq!(wp, d.omega2 / 2.0);
        assert_eq!(wm, d.omega2 / 2.0);
        let (wp, wm) = transition_frequencies(&c, &FieldEnvironment::ez(1e3), &d, DressedOrder::First);
        assert!(((wp - wm) - TAU * 350.0).abs() < 1e-6);
        let (wp, _) = transition_frequencies(&c, &FieldEnvironment::ex(1e3), &d, DressedOrder::First);
        assert!((wp - TAU * 5.0255e6).abs() < 1e-6);
    }

    #[test]
    fn frames_at_origin_and_unmodulated() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 2.0).unwrap();
        let (u1, u2) = frame_transformations(&d, 0.0);
        assert!((u1 - SpinMatrix::identity()).max_norm() < 1e-15);
        assert!((u2 - SpinMatrix::identity()).max_norm() < 1e-15);

        let d0 = DriveParameters::resonant_mhz(&c, 16.0, 0.0).unwrap();
        let t = 1.234e-7;
        let (u1, _) = frame_transformations(&d0, t);
        let p = Complex64::from_polar(1.0, c.zero_field_splitting * t);
        let expect = SpinMatrix::from_diagonal([p, Complex64::new(1.0, 0.0), p]);
        assert!((u1 - expect).max_norm() < 1e-12);

        let t = TAU / d.omega1;
        let (_, u2) = frame_transformations(&d, t);
        let expect = expm_unchecked(&spin_operators().sx, -std::f64::consts::PI);
        assert!((u2 - expect).max_norm() < 1e-12);
    }

    #[test]
    fn drive_hierarchy_rejected() {
        let c = default_constants();
        assert!(DriveParameters::resonant_mhz(&c, 2.0, 16.0).is_err());
        assert!(DriveParameters::resonant_mhz(&c, 0.0, 0.0).is_err());
        assert!(DriveParameters::resonant_mhz(&c, 16.0, -1.0).is_err());
    }

    #[test]
    fn dressed_eigenvectors_are_dressed_basis() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 50.0, 10.0).unwrap();
        let f = FieldEnvironment::zero().with_e([1e3, 0.0, 2e3]);
        let h = dressed_hamiltonian_bare(&c, &f, &d, DressedOrder::First);
        let hd = dressed_hamiltonian(&c, &f, &d, DressedOrder::First);
        for (i, s) in dressed_basis().states().iter().enumerate() {
            let hs: SpinState = h.apply(s);
            let lambda = hd.entry(i, i);
            let resid = (hs.0 - s.0 * lambda).norm();
            assert!(resid < 1e-9 * d.omega2, "state {i} residual {resid}");
        }
    }

    #[test]
    fn hierarchy_report_flags_weak_links() {
        let c = default_constants();
        let d = DriveParameters::resonant_mhz(&c, 16.0, 8.0).unwrap();
        let r = check_hierarchy(&c, &FieldEnvironment::zero(), &d);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.warnings[0].link, "omega1/omega2");
        assert!(!r.grossly_violated());
    }

    fn field_strategy() -> impl Strategy<Value = FieldEnvironment> {
        (
            proptest::array::uniform3(-20e-6..20e-6f64),
            proptest::array::uniform3(-5e3..5e3f64),
        )
            .prop_map(|(b, e)| FieldEnvironment { b, e })
    }

    proptest! {
        #[test]
        fn lab_hamiltonian_is_linear_in_fields(f1 in field_strategy(), f2 in field_strategy()) {
            let c = default_constants();
            let h0 = lab_hamiltonian(&c, &FieldEnvironment::zero());
            let sum = FieldEnvironment {
                b: [f1.b[0] + f2.b[0], f1.b[1] + f2.b[1], f1.b[2] + f2.b[2]],
                e: [f1.e[0] + f2.e[0], f1.e[1] + f2.e[1], f1.e[2] + f2.e[2]],
            };
            let lhs = lab_hamiltonian(&c, &sum) - h0;
            let rhs = (lab_hamiltonian(&c, &f1) - h0) + (lab_hamiltonian(&c, &f2) - h0);
            // entries are O(1e6) against an O(1e10) diagonal
            prop_assert!((lhs - rhs).max_norm() <= 1e-12 * h0.max_norm());
            prop_assert!(lab_hamiltonian(&c, &f1).is_hermitian());
        }

        #[test]
        fn delta_is_even_in_field_signs(f in field_strategy()) {
            let c = default_constants();
            let d = DriveParameters::resonant_mhz(&c, 50.0, 10.0).unwrap();
            let base = detuning_delta(&c, &f, &d);
            prop_assert!(base >= 0.0);
            let mut g = f;
            g.b[2] = -g.b[2];
            prop_assert!((detuning_delta(&c, &g, &d) - base).abs() <= 1e-12 * base.max(1e-300));
            let mut g = f;
            g.e[0] = -g.e[0];
            g.e[1] = -g.e[1];
            // (d_par Ez - d_perp Ex)^2 is not even in Ex alone unless Ez
            // flips with it
            g.e[2] = -g.e[2];
            prop_assert!((detuning_delta(&c, &g, &d) - base).abs() <= 1e-12 * base.max(1e-300));
        }

        #[test]
        fn omega_plus_slopes(ex in -5e3..5e3f64, bz in -20e-6..20e-6f64) {
            let c = default_constants();
            let d = DriveParameters::resonant_mhz(&c, 50.0, 10.0).unwrap();
            let h = 1.0;
            let f = FieldEnvironment::zero().with_e([ex, 0.0, 0.0]).with_b([0.0, 0.0, bz]);
            let fp = FieldEnvironment { e: [ex + h, 0.0, 0.0], ..f };
            let fm = FieldEnvironment { e: [ex - h, 0.0, 0.0], ..f };
            let o = DressedOrder::First;
            let slope = (transition_frequencies(&c, &fp, &d, o).0 - transition_frequencies(&c, &fm, &d, o).0) / (2.0 * h);
            prop_assert!((slope - 1.5 * c.d_perp).abs() < 1e-6);
            let fb = FieldEnvironment { b: [0.0, 0.0, bz + 1e-6], ..f };
            prop_assert_eq!(transition_frequencies(&c, &fb, &d, o).0, transition_frequencies(&c, &f, &d, o).0);
        }
    }
}
