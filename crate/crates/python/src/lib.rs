// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Python bindings. Inputs use the same units as the CLI config: MHz for
//! drives, microtesla for magnetic fields, V/cm for electric fields.

use std::f64::consts::TAU;

use nvsim::hamiltonian::{self, DressedOrder};
use nvsim::{noise, sequence, spectral, Engine, RamseyOptions};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(nvsim, NvsimError, PyRuntimeError);
create_exception!(nvsim, FitError, NvsimError);

const MHZ: f64 = TAU * 1e6;

fn to_py(e: nvsim::Error) -> PyErr {
    use nvsim::Error as E;
    match e {
        E::InvalidParameter(_)
        | E::StepSizeTooCoarse { .. }
        | E::InsufficientSamples { .. }
        | E::DegenerateDesign(_)
        | E::NonUniformGrid { .. }
        | E::NonHermitianInput { .. } => PyValueError::new_err(e.to_string()),
        E::FitFailure { .. } | E::InsufficientSpan { .. } => FitError::new_err(e.to_string()),
        _ => NvsimError::new_err(e.to_string()),
    }
}

fn engine(name: &str) -> PyResult<Engine> {
    name.parse().map_err(to_py)
}

/// NV ground-state constants.
#[pyclass(name = "NvConstants", module = "nvsim", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyNvConstants(hamiltonian::NvConstants);

#[pymethods]
impl PyNvConstants {
    /// Defaults: D = 2.87 GHz, d_par = 0.35 and d_perp = 17 Hz cm/V,
    /// gamma = 28.03 GHz/T.
    #[new]
    #[pyo3(signature = (d_mhz=None, d_par_hz_cm_per_v=None, d_perp_hz_cm_per_v=None, gamma_ghz_per_t=None))]
    fn new(
        d_mhz: Option<f64>,
        d_par_hz_cm_per_v: Option<f64>,
        d_perp_hz_cm_per_v: Option<f64>,
        gamma_ghz_per_t: Option<f64>,
    ) -> PyResult<Self> {
        let def = hamiltonian::NvConstants::default();
        hamiltonian::NvConstants::from_hz(
            d_mhz.map_or(def.zero_field_splitting / TAU, |v| v * 1e6),
            d_par_hz_cm_per_v.unwrap_or(def.d_par / TAU),
            d_perp_hz_cm_per_v.unwrap_or(def.d_perp / TAU),
            gamma_ghz_per_t.map_or(def.gamma / TAU, |v| v * 1e9),
        )
        .map(Self)
        .map_err(to_py)
    }

    #[getter]
    fn d_hz(&self) -> f64 {
        self.0.zero_field_splitting / TAU
    }

    #[getter]
    fn d_perp_hz_cm_per_v(&self) -> f64 {
        self.0.d_perp / TAU
    }

    #[getter]
    fn d_par_hz_cm_per_v(&self) -> f64 {
        self.0.d_par / TAU
    }

    /// `sqrt((3 d_perp / 2)^2 + (d_par / 2)^2)` in Hz cm/V.
    fn effective_dipole_hz(&self) -> f64 {
        noise::effective_dipole(&self.0).d_eff / TAU
    }

    /// Closed-form `T2*` (s) for isotropic Gaussian noise of rms `sigma` V/cm.
    fn t2_star(&self, sigma_v_per_cm: f64) -> f64 {
        noise::effective_dipole(&self.0).t2_star(sigma_v_per_cm)
    }

    fn __repr__(&self) -> String {
        format!(
            "NvConstants(d_mhz={}, d_par_hz_cm_per_v={}, d_perp_hz_cm_per_v={})",
            self.0.zero_field_splitting / MHZ,
            self.0.d_par / TAU,
            self.0.d_perp / TAU
        )
    }
}

/// Static fields: `b_ut` in microtesla, `e_v_per_cm` in V/cm.
#[pyclass(name = "FieldEnvironment", module = "nvsim", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyFieldEnvironment(hamiltonian::FieldEnvironment);

#[pymethods]
impl PyFieldEnvironment {
    #[new]
    #[pyo3(signature = (b_ut=[0.0; 3], e_v_per_cm=[0.0; 3]))]
    fn new(b_ut: [f64; 3], e_v_per_cm: [f64; 3]) -> PyResult<Self> {
        let f = hamiltonian::FieldEnvironment::zero()
            .with_b(b_ut.map(|v| v * 1e-6))
            .with_e(e_v_per_cm);
        f.validate().map_err(to_py)?;
        Ok(Self(f))
    }

    #[getter]
    fn b_ut(&self) -> [f64; 3] {
        self.0.b.map(|v| v * 1e6)
    }

    #[getter]
    fn e_v_per_cm(&self) -> [f64; 3] {
        self.0.e
    }

    fn __repr__(&self) -> String {
        format!("FieldEnvironment(b_ut={:?}, e_v_per_cm={:?})", self.b_ut(), self.0.e)
    }
}

/// Phase-modulated drive; the carrier defaults to resonance with `D`.
#[pyclass(name = "DriveParameters", module = "nvsim", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyDriveParameters(hamiltonian::DriveParameters);

#[pymethods]
impl PyDriveParameters {
    #[new]
    #[pyo3(signature = (omega1_mhz, omega2_mhz, constants=None, carrier_offset_mhz=0.0))]
    fn new(
        omega1_mhz: f64,
        omega2_mhz: f64,
        constants: Option<PyRef<'_, PyNvConstants>>,
        carrier_offset_mhz: f64,
    ) -> PyResult<Self> {
        let c = constants.map(|c| c.0).unwrap_or_default();
        hamiltonian::DriveParameters::new(
            omega1_mhz * MHZ,
            omega2_mhz * MHZ,
            c.zero_field_splitting + carrier_offset_mhz * MHZ,
        )
        .map(Self)
        .map_err(to_py)
    }

    #[getter]
    fn omega1_mhz(&self) -> f64 {
        self.0.omega1 / MHZ
    }

    #[getter]
    fn omega2_mhz(&self) -> f64 {
        self.0.omega2 / MHZ
    }

    /// Under-sampling interval `2 pi / Omega_1`, seconds.
    #[getter]
    fn modulation_period(&self) -> f64 {
        self.0.modulation_period()
    }

    fn __repr__(&self) -> String {
        format!("DriveParameters(omega1_mhz={}, omega2_mhz={})", self.omega1_mhz(), self.omega2_mhz())
    }
}

/// Sampled Ramsey signal with its metadata.
#[pyclass(name = "SignalTrace", module = "nvsim", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySignalTrace(nvsim::SignalTrace);

#[pymethods]
impl PySignalTrace {
    #[new]
    fn new(times: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        nvsim::SignalTrace::new(times, values, nvsim::trace::Sampling::Dense, Default::default())
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }

    #[getter]
    fn engine(&self) -> Option<String> {
        self.0.metadata.engine.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv_string()
    }

    fn sidecar_json(&self) -> String {
        self.0.sidecar_json()
    }

    /// `(frequencies_hz, amplitudes)` of the one-sided spectrum.
    #[pyo3(signature = (zero_pad=1))]
    fn spectrum(&self, zero_pad: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let opts = spectral::SpectrumOptions { zero_pad, ..Default::default() };
        let s = spectral::fft_spectrum_with(&self.0.times, &self.0.values, &opts).map_err(to_py)?;
        Ok((s.frequencies, s.amplitudes))
    }

    /// Frequencies (Hz) of the significant spectral peaks.
    fn peaks(&self) -> PyResult<Vec<f64>> {
        let s = spectral::fft_spectrum(&self.0).map_err(to_py)?;
        Ok(spectral::find_peaks(&s).into_iter().map(|i| s.frequencies[i]).collect())
    }

    fn fit_damped_sinusoid(&self) -> PyResult<PyDecayFit> {
        spectral::fit_damped_sinusoid(&self.0).map(PyDecayFit).map_err(to_py)
    }

    /// `(frequency_hz, frequency_err_hz)` of an undamped sinusoid fit.
    fn fit_sinusoid(&self) -> PyResult<(f64, f64)> {
        let s = spectral::fit_sinusoid(&self.0).map_err(to_py)?;
        Ok((s.frequency_hz, s.frequency_err_hz))
    }

    fn __repr__(&self) -> String {
        format!("SignalTrace(n={}, span={:e} s)", self.0.len(), self.0.span())
    }
}

#[pyclass(name = "DecayFit", module = "nvsim", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDecayFit(spectral::DecayFit);

#[pymethods]
impl PyDecayFit {
    #[getter]
    fn frequency_hz(&self) -> f64 {
        self.0.frequency_hz
    }

    #[getter]
    fn frequency_err_hz(&self) -> f64 {
        self.0.frequency_err_hz
    }

    #[getter]
    fn t2_star_s(&self) -> Option<f64> {
        self.0.t2_star_s
    }

    #[getter]
    fn t2_star_err_s(&self) -> Option<f64> {
        self.0.t2_star_err_s
    }

    #[getter]
    fn t2_star_unbounded(&self) -> bool {
        self.0.t2_star_unbounded
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.0.residual_norm
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("fit serializes")
    }

    fn __repr__(&self) -> String {
        format!("DecayFit(frequency_hz={:e}, t2_star_s={:?})", self.0.frequency_hz, self.0.t2_star_s)
    }
}

#[pyclass(name = "DielectricFit", module = "nvsim", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDielectricFit(noise::DielectricFit);

#[pymethods]
impl PyDielectricFit {
    /// `F`, s^-1.
    #[getter]
    fn noise_floor(&self) -> f64 {
        self.0.model.noise_floor
    }

    #[getter]
    fn noise_floor_err(&self) -> f64 {
        self.0.noise_floor_err
    }

    /// `S`, s^-1.
    #[getter]
    fn surface_amplitude(&self) -> f64 {
        self.0.model.surface_amplitude
    }

    #[getter]
    fn surface_amplitude_err(&self) -> f64 {
        self.0.surface_amplitude_err
    }

    /// Model rate `1/T2*` under a cover of permittivity `kappa`.
    fn rate(&self, kappa: f64) -> PyResult<f64> {
        noise::t2star_model(kappa, &self.0.model).map_err(to_py)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("fit serializes")
    }

    fn __repr__(&self) -> String {
        format!("DielectricFit(F={:e}, S={:e})", self.noise_floor(), self.surface_amplitude())
    }
}

fn options(name: &str) -> PyResult<RamseyOptions> {
    Ok(RamseyOptions::new(engine(name)?))
}

/// Readout probability at each free-evolution time (s).
#[pyfunction]
#[pyo3(signature = (constants, fields, drive, times, engine="analytic"))]
fn ramsey_signal(
    constants: PyRef<'_, PyNvConstants>,
    fields: PyRef<'_, PyFieldEnvironment>,
    drive: PyRef<'_, PyDriveParameters>,
    times: Vec<f64>,
    engine: &str,
) -> PyResult<Vec<f64>> {
    sequence::ramsey_signal(&constants.0, &fields.0, &drive.0, &times, &options(engine)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (constants, fields, drive, times, engine="analytic"))]
fn dense_trace(
    constants: PyRef<'_, PyNvConstants>,
    fields: PyRef<'_, PyFieldEnvironment>,
    drive: PyRef<'_, PyDriveParameters>,
    times: Vec<f64>,
    engine: &str,
) -> PyResult<PySignalTrace> {
    sequence::dense_trace(&constants.0, &fields.0, &drive.0, &times, &options(engine)?)
        .map(PySignalTrace)
        .map_err(to_py)
}

/// Trace sampled at `t = n T`, `n = 0..=n_max`.
#[pyfunction]
#[pyo3(signature = (constants, fields, drive, n_max, engine="analytic"))]
fn undersampled_trace(
    constants: PyRef<'_, PyNvConstants>,
    fields: PyRef<'_, PyFieldEnvironment>,
    drive: PyRef<'_, PyDriveParameters>,
    n_max: usize,
    engine: &str,
) -> PyResult<PySignalTrace> {
    sequence::undersampled_trace(&constants.0, &fields.0, &drive.0, n_max, &options(engine)?)
        .map(PySignalTrace)
        .map_err(to_py)
}

/// `(w+, w-)` in Hz, second order in the detuning.
#[pyfunction]
fn transition_frequencies(
    constants: PyRef<'_, PyNvConstants>,
    fields: PyRef<'_, PyFieldEnvironment>,
    drive: PyRef<'_, PyDriveParameters>,
) -> (f64, f64) {
    let (p, m) = hamiltonian::transition_frequencies(&constants.0, &fields.0, &drive.0, DressedOrder::Second);
    (p / TAU, m / TAU)
}

/// `[(value, shift_hz, shift_err_hz)]` for fields along `axis` ("ex",
/// "ez" in V/cm or "bz" in uT).
#[pyfunction]
#[pyo3(signature = (constants, drive, axis, values, n_max=400, engine="analytic"))]
fn frequency_shift_scan(
    constants: PyRef<'_, PyNvConstants>,
    drive: PyRef<'_, PyDriveParameters>,
    axis: &str,
    values: Vec<f64>,
    n_max: usize,
    engine: &str,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let env = |v: f64| match axis {
        "ex" => Ok(hamiltonian::FieldEnvironment::ex(v)),
        "ez" => Ok(hamiltonian::FieldEnvironment::ez(v)),
        "bz" => Ok(hamiltonian::FieldEnvironment::bz(v * 1e-6)),
        other => Err(PyValueError::new_err(format!("unknown axis '{other}'"))),
    };
    let scan = values.iter().map(|v| env(*v)).collect::<PyResult<Vec<_>>>()?;
    let points = sequence::frequency_shift_scan(&constants.0, &drive.0, &scan, n_max, &options(engine)?)
        .map_err(to_py)?;
    Ok(values.iter().zip(points).map(|(v, p)| (*v, p.shift_hz, p.shift_err_hz)).collect())
}

/// Ensemble-averaged signal over isotropic Gaussian fields of rms
/// `sigma_v_per_cm`.
#[pyfunction]
#[pyo3(signature = (constants, drive, sigma_v_per_cm, times, seed=0, n_samples=noise::DEFAULT_ENSEMBLE))]
fn ensemble_dephasing_trace(
    constants: PyRef<'_, PyNvConstants>,
    drive: PyRef<'_, PyDriveParameters>,
    sigma_v_per_cm: f64,
    times: Vec<f64>,
    seed: u64,
    n_samples: usize,
) -> PyResult<PySignalTrace> {
    let n = noise::GaussianFieldNoise::isotropic(sigma_v_per_cm, seed, n_samples);
    noise::ensemble_dephasing_trace(&constants.0, &drive.0, &n, &times)
        .map(PySignalTrace)
        .map_err(to_py)
}

/// Fits `1/T2*(kappa) = sqrt(F^2 + g(kappa)^2 S^2)`; `rate_errs` may be
/// omitted for an unweighted fit.
#[pyfunction]
#[pyo3(signature = (kappas, rates, rate_errs=None))]
fn fit_dielectric_model(kappas: Vec<f64>, rates: Vec<f64>, rate_errs: Option<Vec<f64>>) -> PyResult<PyDielectricFit> {
    if kappas.len() != rates.len() || rate_errs.as_ref().is_some_and(|e| e.len() != kappas.len()) {
        return Err(PyValueError::new_err("kappas, rates and rate_errs must have equal lengths"));
    }
    let errs = rate_errs.unwrap_or_else(|| vec![0.0; kappas.len()]);
    let points: Vec<noise::KappaPoint> = kappas
        .iter()
        .zip(&rates)
        .zip(&errs)
        .map(|((k, r), e)| noise::KappaPoint { kappa: *k, rate_hz: *r, rate_err_hz: *e })
        .collect();
    noise::fit_dielectric_model(&points).map(PyDielectricFit).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "nvsim")]
fn nvsim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNvConstants>()?;
    m.add_class::<PyFieldEnvironment>()?;
    m.add_class::<PyDriveParameters>()?;
    m.add_class::<PySignalTrace>()?;
    m.add_class::<PyDecayFit>()?;
    m.add_class::<PyDielectricFit>()?;
    m.add_function(wrap_pyfunction!(ramsey_signal, m)?)?;
    m.add_function(wrap_pyfunction!(dense_trace, m)?)?;
    m.add_function(wrap_pyfunction!(undersampled_trace, m)?)?;
    m.add_function(wrap_pyfunction!(transition_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(frequency_shift_scan, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_dephasing_trace, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dielectric_model, m)?)?;
    m.add("NvsimError", m.py().get_type::<NvsimError>())?;
    m.add("FitError", m.py().get_type::<FitError>())?;
    Ok(())
}
