// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! JSON run configuration. Every physical quantity carries its unit in the
//! key name and is converted to SI / angular units here.

use std::f64::consts::TAU;
use std::path::Path;

use nvsim::hamiltonian::{DriveParameters, FieldEnvironment, NvConstants};
use nvsim::noise::{GaussianFieldNoise, DEFAULT_ENSEMBLE};
use nvsim::propagator::{Frame, Integrator, PropagationConfig};
use nvsim::sequence::GateMode;
use nvsim::{Engine, RamseyOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const MHZ: f64 = TAU * 1e6;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates: Option<GatesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramsey: Option<RamseySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_kappa: Option<FitKappaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate_rwa: Option<ValidateRwaSection>,
}

/// NV constants in ordinary-frequency units; omitted keys take the
/// default values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_field_splitting_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_par_hz_cm_per_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_perp_hz_cm_per_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ghz_per_t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_ut: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_v_per_cm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_v_per_m: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub omega1_mhz: f64,
    pub omega2_mhz: f64,
    /// Carrier minus `D`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_offset_mhz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Frame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitarity_check_interval: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GatesConfig {
    Ideal,
    Waveform {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        microwave_rabi_mhz: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        axial_rate_mhz: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseGrid {
    pub span_us: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySection {
    /// Explicit free-evolution times; an empty list is a no-op.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations_us: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<DenseGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undersampled_n_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanAxis {
    Ez,
    Ex,
    Bz,
    VoltageProxy,
}

impl std::str::FromStr for ScanAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ez" => Ok(ScanAxis::Ez),
            "ex" => Ok(ScanAxis::Ex),
            "bz" => Ok(ScanAxis::Bz),
            "voltage-proxy" | "voltage_proxy" | "voltage" => Ok(ScanAxis::VoltageProxy),
            other => Err(format!("unknown scan axis '{other}' (expected ez, ex, bz or voltage-proxy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<ScanAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_v_per_cm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_v_per_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_ut: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_v: Option<Vec<f64>>,
    /// Electrode spacing for the voltage proxy, `E = U / gap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrode_gap_um: Option<f64>,
    /// Field direction for the voltage proxy (normalized on load).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_direction: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_v_per_cm: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_v_per_m: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Trace length; defaults to three closed-form `T2*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitKappaSection {
    /// `kappa,rate_hz,rate_err_hz` CSV, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateRwaSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<DriveConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_tolerance: Option<f64>,
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("{name} must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(format!("{name} must be positive, got {v}")))
    }
}

fn one_of<T: Clone>(a: (&str, &Option<T>), b: (&str, &Option<T>)) -> Result<Option<(usize, T)>, CliError> {
    match (a.1, b.1) {
        (Some(_), Some(_)) => Err(CliError::config(format!("give either {} or {}, not both", a.0, b.0))),
        (Some(v), None) => Ok(Some((0, v.clone()))),
        (None, Some(v)) => Ok(Some((1, v.clone()))),
        (None, None) => Ok(None),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section that is present.
    pub fn validate(&self) -> Result<(), CliError> {
        let c = self.constants()?;
        self.field_environment()?;
        if let Some(d) = &self.drive {
            resolve_drive(&c, d)?;
        }
        self.ramsey_options(self.engine.unwrap_or(Engine::Analytic))?;
        if let Some(r) = &self.ramsey {
            r.validate()?;
        }
        if let Some(s) = &self.scan {
            s.validate()?;
        }
        if let Some(dp) = &self.dephasing {
            dp.validate()?;
        }
        if let Some(v) = &self.validate_rwa {
            v.validate(&c)?;
        }
        if let Some(FitKappaSection { curve_points: Some(n), .. }) = &self.fit_kappa {
            if *n < 2 {
                return Err(CliError::config("fit_kappa.curve_points must be >= 2"));
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<NvConstants, CliError> {
        let def = NvConstants::default();
        let k = self.constants.unwrap_or_default();
        let c = NvConstants::from_hz(
            k.zero_field_splitting_mhz.map_or(def.zero_field_splitting / TAU, |v| v * 1e6),
            k.d_par_hz_cm_per_v.unwrap_or(def.d_par / TAU),
            k.d_perp_hz_cm_per_v.unwrap_or(def.d_perp / TAU),
            k.gamma_ghz_per_t.map_or(def.gamma / TAU, |v| v * 1e9),
        )
        .map_err(CliError::from_config)?;
        Ok(c)
    }

    pub fn field_environment(&self) -> Result<FieldEnvironment, CliError> {
        let f = self.fields.unwrap_or_default();
        let b = f.b_ut.unwrap_or([0.0; 3]).map(|v| v * 1e-6);
        let e = match one_of(("e_v_per_cm", &f.e_v_per_cm), ("e_v_per_m", &f.e_v_per_m))? {
            Some((0, e)) => e,
            Some((_, e)) => e.map(|v| v / 100.0),
            None => [0.0; 3],
        };
        let env = FieldEnvironment::zero().with_b(b).with_e(e);
        env.validate().map_err(CliError::from_config)?;
        Ok(env)
    }

    pub fn drive(&self) -> Result<DriveParameters, CliError> {
        let d = self.drive.as_ref().ok_or_else(|| CliError::config("config has no drive section"))?;
        resolve_drive(&self.constants()?, d)
    }

    pub fn propagation(&self) -> Result<PropagationConfig, CliError> {
        let p = self.propagation.unwrap_or_default();
        let mut cfg = PropagationConfig {
            frame: p.frame.unwrap_or_default(),
            ..PropagationConfig::default()
        };
        if let Some(dt) = p.dt_ps {
            cfg.dt = Some(positive("propagation.dt_ps", dt)? * 1e-12);
        }
        if let Some(i) = p.integrator {
            cfg.integrator = i;
        }
        if let Some(n) = p.unitarity_check_interval {
            if n == 0 {
                return Err(CliError::config("propagation.unitarity_check_interval must be >= 1"));
            }
            cfg.unitarity_check_interval = n;
        }
        Ok(cfg)
    }

    pub fn gate_mode(&self) -> Result<GateMode, CliError> {
        match self.gates.unwrap_or(GatesConfig::Ideal) {
            GatesConfig::Ideal => Ok(GateMode::Ideal),
            GatesConfig::Waveform { microwave_rabi_mhz, axial_rate_mhz } => Ok(GateMode::Waveform {
                microwave_rabi: microwave_rabi_mhz
                    .map_or(Ok(nvsim::sequence::DEFAULT_MICROWAVE_RABI), |v| {
                        positive("gates.microwave_rabi_mhz", v).map(|v| v * MHZ)
                    })?,
                axial_rate: axial_rate_mhz.map_or(Ok(nvsim::sequence::DEFAULT_AXIAL_RATE), |v| {
                    positive("gates.axial_rate_mhz", v).map(|v| v * MHZ)
                })?,
            }),
        }
    }

    pub fn ramsey_options(&self, engine: Engine) -> Result<RamseyOptions, CliError> {
        Ok(RamseyOptions {
            engine,
            propagation: self.propagation()?,
            gates: self.gate_mode()?,
        })
    }
}

pub fn resolve_drive(c: &NvConstants, d: &DriveConfig) -> Result<DriveParameters, CliError> {
    let offset = finite("drive.carrier_offset_mhz", d.carrier_offset_mhz.unwrap_or(0.0))?;
    DriveParameters::new(
        finite("drive.omega1_mhz", d.omega1_mhz)? * MHZ,
        finite("drive.omega2_mhz", d.omega2_mhz)? * MHZ,
        c.zero_field_splitting + offset * MHZ,
    )
    .map_err(CliError::from_config)
}

impl DenseGrid {
    pub fn validate(&self, name: &str) -> Result<(), CliError> {
        positive(&format!("{name}.span_us"), self.span_us)?;
        if self.n_points < 2 {
            return Err(CliError::config(format!("{name}.n_points must be >= 2")));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        nvsim::sequence::uniform_times(self.span_us * 1e-6, self.n_points)
    }
}

impl RamseySection {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.durations_us.is_none() && self.dense.is_none() && self.undersampled_n_max.is_none() {
            return Err(CliError::config(
                "ramsey section needs durations_us, dense or undersampled_n_max",
            ));
        }
        if let Some(ts) = &self.durations_us {
            if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(CliError::config("ramsey.durations_us must be finite and >= 0"));
            }
            if ts.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CliError::config("ramsey.durations_us must be strictly increasing"));
            }
        }
        if let Some(g) = &self.dense {
            g.validate("ramsey.dense")?;
        }
        if let Some(n) = self.undersampled_n_max {
            if n < 2 {
                return Err(CliError::config("ramsey.undersampled_n_max must be >= 2"));
            }
        }
        Ok(())
    }
}

/// Scan points in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScan {
    pub axis: ScanAxis,
    /// Scan values as given (unit in `unit`).
    pub values: Vec<f64>,
    pub unit: &'static str,
    pub environments: Vec<FieldEnvironment>,
    pub n_max: usize,
}

pub const DEFAULT_SCAN_N_MAX: usize = 400;

impl ScanSection {
    pub fn validate(&self) -> Result<(), CliError> {
        // axis may come from the command line; check what can be checked
        let lists = [&self.values_v_per_cm, &self.values_v_per_m, &self.values_ut, &self.values_v];
        if lists.iter().filter(|l| l.is_some()).count() > 1 {
            return Err(CliError::config(
                "scan takes exactly one of values_v_per_cm, values_v_per_m, values_ut, values_v",
            ));
        }
        if let Some(n) = self.n_max {
            if n < 2 {
                return Err(CliError::config("scan.n_max must be >= 2"));
            }
        }
        if let Some(axis) = self.axis {
            self.resolve(axis)?;
        }
        Ok(())
    }

    pub fn resolve(&self, axis: ScanAxis) -> Result<ResolvedScan, CliError> {
        let (values, unit, to_env): (&Option<Vec<f64>>, &'static str, Box<dyn Fn(f64) -> FieldEnvironment>) =
            match axis {
                ScanAxis::Ex | ScanAxis::Ez => {
                    let ez = axis == ScanAxis::Ez;
                    let env = move |e: f64| if ez { FieldEnvironment::ez(e) } else { FieldEnvironment::ex(e) };
                    match one_of(("values_v_per_cm", &self.values_v_per_cm), ("values_v_per_m", &self.values_v_per_m))? {
                        Some((0, _)) => (&self.values_v_per_cm, "v_per_cm", Box::new(env)),
                        Some(_) => (&self.values_v_per_m, "v_per_m", Box::new(move |e| env(e / 100.0))),
                        None => (&None, "v_per_cm", Box::new(env)),
                    }
                }
                ScanAxis::Bz => (&self.values_ut, "ut", Box::new(|b: f64| FieldEnvironment::bz(b * 1e-6))),
                ScanAxis::VoltageProxy => {
                    let gap_cm = positive(
                        "scan.electrode_gap_um",
                        self.electrode_gap_um
                            .ok_or_else(|| CliError::config("voltage-proxy scan needs electrode_gap_um"))?,
                    )? * 1e-4;
                    let dir = self
                        .field_direction
                        .ok_or_else(|| CliError::config("voltage-proxy scan needs field_direction"))?;
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(CliError::config("scan.field_direction must be a non-zero vector"));
                    }
                    let unit_dir = dir.map(|v| v / norm);
                    (
                        &self.values_v,
                        "v",
                        Box::new(move |u: f64| FieldEnvironment::zero().with_e(unit_dir.map(|k| k * u / gap_cm))),
                    )
                }
            };
        let expected = match (axis, unit) {
            (ScanAxis::Bz, _) => "values_ut",
            (ScanAxis::VoltageProxy, _) => "values_v",
            _ => "values_v_per_cm or values_v_per_m",
        };
        let values = values
            .clone()
            .ok_or_else(|| CliError::config(format!("scan along {axis:?} needs {expected}")))?;
        if values.len() < 2 {
            return Err(CliError::config(format!("scan needs >= 2 values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config("scan values must be finite"));
        }
        if values.iter().all(|v| *v == values[0]) {
            return Err(CliError::config(format!(
                "degenerate scan: every value equals {}",
                values[0]
            )));
        }
        Ok(ResolvedScan {
            axis,
            environments: values.iter().map(|v| to_env(*v)).collect(),
            values,
            unit,
            n_max: self.n_max.unwrap_or(DEFAULT_SCAN_N_MAX),
        })
    }
}

pub const DEFAULT_DEPHASING_POINTS: usize = 400;

impl DephasingSection {
    pub fn validate(&self) -> Result<(), CliError> {
        self.sigma()?;
        if let Some(n) = self.n_points {
            if n < 16 {
                return Err(CliError::config("dephasing.n_points must be >= 16"));
            }
        }
        if let Some(s) = self.span_us {
            positive("dephasing.span_us", s)?;
        }
        if let Some(n) = self.n_samples {
            if n < nvsim::noise::MIN_ENSEMBLE {
                return Err(CliError::config(format!(
                    "dephasing.n_samples must be >= {}",
                    nvsim::noise::MIN_ENSEMBLE
                )));
            }
        }
        Ok(())
    }

    /// Component standard deviations in V/cm.
    pub fn sigma(&self) -> Result<[f64; 3], CliError> {
        let s = match one_of(("sigma_v_per_cm", &self.sigma_v_per_cm), ("sigma_v_per_m", &self.sigma_v_per_m))? {
            Some((0, s)) => s,
            Some((_, s)) => s.map(|v| v / 100.0),
            None => return Err(CliError::config("dephasing needs sigma_v_per_cm or sigma_v_per_m")),
        };
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CliError::config("dephasing sigma components must be finite and >= 0"));
        }
        Ok(s)
    }

    pub fn noise(&self, seed: u64) -> Result<GaussianFieldNoise, CliError> {
        Ok(GaussianFieldNoise {
            sigma: self.sigma()?,
            seed,
            n_samples: self.n_samples.unwrap_or(DEFAULT_ENSEMBLE),
        })
    }
}

pub const DEFAULT_RWA_SPAN_US: f64 = 2.0;
pub const DEFAULT_RWA_POINTS: usize = 401;
pub const DEFAULT_RWA_TOLERANCE: f64 = 0.02;

impl ValidateRwaSection {
    pub fn validate(&self, c: &NvConstants) -> Result<(), CliError> {
        for d in self.cases.iter().flatten() {
            resolve_drive(c, d)?;
        }
        if let Some(s) = self.span_us {
            positive("validate_rwa.span_us", s)?;
        }
        if let Some(t) = self.rms_tolerance {
            positive("validate_rwa.rms_tolerance", t)?;
        }
        if matches!(self.n_points, Some(n) if n < 2) {
            return Err(CliError::config("validate_rwa.n_points must be >= 2"));
        }
        Ok(())
    }
}
