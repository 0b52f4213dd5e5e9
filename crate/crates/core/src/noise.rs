// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Quasi-static noise: Gaussian electric-field ensembles, dielectric
//! screening of surface noise, and the auxiliary `Delta_2` / `delta D`
//! diagnostics.
//!
//! Dephasing rates are `1 / T2*` in s^-1 throughout.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    detuning_delta2, transition_frequencies, DressedOrder, DriveParameters, FieldEnvironment,
    NoisePerturbation, NvConstants,
};
use crate::lsq::{linear_lstsq, minimize, Residuals};
use crate::trace::{Sampling, SignalTrace, TraceMetadata};

/// Ensemble members drawn from one RNG stream.
pub const BLOCK_SIZE: usize = 256;
pub const MIN_ENSEMBLE: usize = 100;
pub const DEFAULT_ENSEMBLE: usize = 10_000;
pub const KAPPA_DIAMOND: f64 = 5.7;
pub const KAPPA_AIR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDipole {
    /// rad/s per V/cm.
    pub d_eff: f64,
}

/// `d_eff = sqrt((3 d_perp / 2)^2 + (d_par / 2)^2)`.
pub fn effective_dipole(c: &NvConstants) -> EffectiveDipole {
    EffectiveDipole {
        d_eff: (1.5 * c.d_perp).hypot(0.5 * c.d_par),
    }
}

impl EffectiveDipole {
    /// Closed-form `T2* = sqrt(2) / (d_eff sigma)` for isotropic noise.
    pub fn t2_star(&self, sigma: f64) -> f64 {
        SQRT_2 / (self.d_eff * sigma)
    }

    /// Field rms (V/cm) implied by a dephasing rate.
    pub fn field_for_rate(&self, rate: f64) -> f64 {
        SQRT_2 * rate / self.d_eff
    }
}

/// Independent zero-mean Gaussian field components, V/cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFieldNoise {
    /// Standard deviation of `(Ex, Ey, Ez)`.
    pub sigma: [f64; 3],
    pub seed: u64,
    pub n_samples: usize,
}

impl GaussianFieldNoise {
    pub fn isotropic(sigma: f64, seed: u64, n_samples: usize) -> Self {
        GaussianFieldNoise {
            sigma: [sigma; 3],
            seed,
            n_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {:?}", self.sigma)));
        }
        if self.n_samples < MIN_ENSEMBLE {
            return Err(Error::invalid(format!(
                "ensemble needs >= {MIN_ENSEMBLE} samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

/// RNG for block `block` of the stream keyed by `seed`.
fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Averages `member(rng) -> frequency` over an ensemble as
/// `mean_k cos(w_k t)` for every `t`. Blocks are reduced in order, so the
/// result is independent of the thread count.
fn ensemble_cosine<F>(n: usize, times: &[f64], member: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    let partial: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK_SIZE;
            let hi = (lo + BLOCK_SIZE).min(n);
            let freqs: Vec<f64> = (0..hi - lo).map(|i| member(b, i)).collect();
            times
                .iter()
                .map(|&t| freqs.iter().map(|w| (w * t).cos()).sum::<f64>())
                .collect()
        })
        .collect();
    let mut acc = vec![0.0; times.len()];
    for p in &partial {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc.iter().map(|s| s / n as f64).collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid must be finite"));
    }
    Ok(())
}

/// Field samples of every channel for one block, summed per member.
fn block_fields(channels: &[GaussianFieldNoise], block: usize, len: usize) -> Vec<[f64; 3]> {
    let mut fields = vec![[0.0; 3]; len];
    for ch in channels {
        let mut rng = block_rng(ch.seed, block);
        for e in fields.iter_mut() {
            for (k, v) in e.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v += ch.sigma[k] * z;
            }
        }
    }
    fields
}

/// Ensemble-averaged under-sampled signal
/// `1/2 (1 + <cos((Omega_1/2 - w+(E)) t)>)` over Gaussian fields.
pub fn ensemble_dephasing_trace(
    c: &NvConstants,
    d: &DriveParameters,
    noise: &GaussianFieldNoise,
    times: &[f64],
) -> Result<SignalTrace> {
    ensemble_dephasing_trace_channels(c, d, std::slice::from_ref(noise), times)
}

/// As [`ensemble_dephasing_trace`] for a field that is the sum of
/// independent channels (e.g. intrinsic plus surface noise). All channels
/// must share `n_samples`.
pub fn ensemble_dephasing_trace_channels(
    c: &NvConstants,
    d: &DriveParameters,
    channels: &[GaussianFieldNoise],
    times: &[f64],
) -> Result<SignalTrace> {
    c.validate()?;
    d.validate()?;
    check_times(times)?;
    let first = channels.first().ok_or_else(|| Error::invalid("no noise channels"))?;
    for ch in channels {
        ch.validate()?;
        if ch.n_samples != first.n_samples {
            return Err(Error::invalid("noise channels must share n_samples"));
        }
    }
    let n = first.n_samples;
    let blocks = n.div_ceil(BLOCK_SIZE);
    let fields: Vec<Vec<[f64; 3]>> = (0..blocks)
        .map(|b| block_fields(channels, b, (n - b * BLOCK_SIZE).min(BLOCK_SIZE)))
        .collect();
    let mean = ensemble_cosine(n, times, |b, i| {
        let f = FieldEnvironment::zero().with_e(fields[b][i]);
        let (wp, _) = transition_frequencies(c, &f, d, DressedOrder::Second);
        0.5 * d.omega1 - wp
    });
    let values = mean.iter().map(|m| 0.5 * (1.0 + m)).collect();
    let mut meta = TraceMetadata {
        constants: Some(*c),
        drive: Some(*d),
        engine: Some("analytic".into()),
        seed: Some(first.seed),
        ..Default::default()
    };
    meta.extra.insert("noise".into(), serde_json::to_value(channels).expect("serializable"));
    SignalTrace::new(times.to_vec(), values, Sampling::Dense, meta)
}

/// Dielectric screening model `1/T2*(kappa) = sqrt(F^2 + g^2 S^2)`,
/// `g = (kappa_d + kappa_air) / (kappa_d + kappa_ext)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DielectricModel {
    pub kappa_d: f64,
    pub kappa_air: f64,
    /// Intrinsic floor `F`, s^-1.
    pub noise_floor: f64,
    /// Surface term `S` (bare surface, air cover), s^-1.
    pub surface_amplitude: f64,
}

impl DielectricModel {
    pub fn new(noise_floor: f64, surface_amplitude: f64) -> Result<Self> {
        let m = DielectricModel {
            kappa_d: KAPPA_DIAMOND,
            kappa_air: KAPPA_AIR,
            noise_floor,
            surface_amplitude,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_d >= 1.0 && self.kappa_air >= 1.0) {
            return Err(Error::invalid("dielectric constants must be >= 1"));
        }
        if !(self.noise_floor >= 0.0 && self.surface_amplitude >= 0.0) {
            return Err(Error::invalid("F and S must be >= 0"));
        }
        Ok(())
    }

    /// Screening factor `g(kappa_ext)`.
    pub fn screening(&self, kappa_ext: f64) -> f64 {
        (self.kappa_d + self.kappa_air) / (self.kappa_d + kappa_ext)
    }
}

/// Dephasing rate under a cover of permittivity `kappa_ext`.
pub fn t2star_model(kappa_ext: f64, m: &DielectricModel) -> Result<f64> {
    if !(kappa_ext >= 1.0) {
        return Err(Error::invalid(format!("kappa_ext must be >= 1, got {kappa_ext}")));
    }
    Ok(m.noise_floor.hypot(m.screening(kappa_ext) * m.surface_amplitude))
}

/// One row of a kappa scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    pub kappa: f64,
    pub rate_hz: f64,
    pub rate_err_hz: f64,
}

pub fn read_kappa_csv<R: Read>(r: R) -> Result<Vec<KappaPoint>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(|e| Error::invalid(format!("kappa csv: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["kappa", "rate_hz", "rate_err_hz"] {
        return Err(Error::invalid(format!(
            "expected header kappa,rate_hz,rate_err_hz, got {headers:?}"
        )));
    }
    rd.deserialize()
        .map(|r| r.map_err(|e| Error::invalid(format!("kappa csv: {e}"))))
        .collect()
}

pub fn write_kappa_csv<W: Write>(w: W, points: &[KappaPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p).map_err(|e| Error::invalid(format!("kappa csv: {e}")))?;
    }
    out.flush().map_err(|e| Error::invalid(format!("kappa csv: {e}")))?;
    Ok(())
}

/// `F` and `S` with their fitted squares and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DielectricFit {
    pub model: DielectricModel,
    /// One-sigma upper excursion of `F`: `sqrt(F^2 + var(F^2)^(1/2)) - F`.
    pub noise_floor_err: f64,
    pub surface_amplitude_err: f64,
    /// Fitted `(F^2, S^2)`; either may be slightly negative for a near-zero
    /// term.
    pub squares: [f64; 2],
    /// Covariance of `(F^2, S^2)`.
    pub covariance: [[f64; 2]; 2],
    pub residual_norm: f64,
    pub iterations: usize,
    /// True when the rates carried uncertainties used as weights.
    pub weighted: bool,
}

impl DielectricFit {
    /// `(F, S)` converted to rms field amplitudes in V/cm.
    pub fn field_amplitudes(&self, c: &NvConstants) -> (f64, f64) {
        let d = effective_dipole(c);
        (
            d.field_for_rate(self.model.noise_floor),
            d.field_for_rate(self.model.surface_amplitude),
        )
    }
}

struct Screening<'a> {
    g2: Vec<f64>,
    y: &'a [f64],
    w: Vec<f64>,
}

impl Residuals for Screening<'_> {
    fn len(&self) -> usize {
        self.y.len()
    }

    fn eval(&self, p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
        // rate = sqrt(u + g^2 v); a nonpositive argument is mapped to a
        // large residual through the clamp
        let rate = |i: usize| (p[0] + self.g2[i] * p[1]).max(1e-300).sqrt();
        for i in 0..self.y.len() {
            r[i] = self.w[i] * (rate(i) - self.y[i]);
        }
        if let Some(j) = jac {
            for i in 0..self.y.len() {
                let h = 0.5 * self.w[i] / rate(i);
                j[(i, 0)] = h;
                j[(i, 1)] = h * self.g2[i];
            }
        }
    }
}

fn upper_excursion(square: f64, var: f64) -> f64 {
    let s = square.max(0.0);
    (s + var.max(0.0).sqrt()).sqrt() - s.sqrt()
}

/// Weighted least-squares fit of `(F, S)` with screening constants
/// `kappa_d = 5.7`, `kappa_air = 1`. Uncertainties of zero on every point
/// mean an unweighted fit. Two points with distinct `kappa` determine the
/// model exactly.
pub fn fit_dielectric_model(points: &[KappaPoint]) -> Result<DielectricFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: points.len(),
        });
    }
    for p in points {
        if !(p.kappa >= 1.0 && p.rate_hz.is_finite() && p.rate_hz > 0.0 && p.rate_err_hz >= 0.0) {
            return Err(Error::invalid(format!("invalid kappa point {p:?}")));
        }
    }
    let k0 = points[0].kappa;
    if points.iter().all(|p| p.kappa == k0) {
        return Err(Error::DegenerateDesign("all kappa values are equal".into()));
    }
    let weighted = points.iter().any(|p| p.rate_err_hz > 0.0);
    if weighted && points.iter().any(|p| !(p.rate_err_hz > 0.0)) {
        return Err(Error::invalid("either every point or no point carries an uncertainty"));
    }
    let template = DielectricModel::new(0.0, 0.0)?;
    let y: Vec<f64> = points.iter().map(|p| p.rate_hz).collect();
    let g2: Vec<f64> = points.iter().map(|p| template.screening(p.kappa).powi(2)).collect();
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted { 1.0 / p.rate_err_hz } else { 1.0 })
        .collect();

    // linear start on rate^2 = u + g^2 v, weighted by 1 / (2 rate sigma)
    let x = DMatrix::from_fn(y.len(), 2, |i, k| w[i] / (2.0 * y[i]) * if k == 0 { 1.0 } else { g2[i] });
    let rhs = DVector::from_fn(y.len(), |i, _| w[i] / (2.0 * y[i]) * y[i] * y[i]);
    let start = linear_lstsq(&x, &rhs).ok_or_else(|| Error::fit("linear initialization failed", f64::NAN))?;
    let positive = |v: f64, scale: f64| if v > 0.0 { v } else { 1e-6 * scale };
    let ymax2 = y.iter().fold(0.0f64, |a, b| a.max(b * b));
    let p0 = [positive(start[0], ymax2), positive(start[1], ymax2)];

    let model = Screening { g2, y: &y, w };
    let ynorm = model.y.iter().zip(&model.w).map(|(y, w)| (y * w).powi(2)).sum::<f64>().sqrt();
    let sol = minimize(&model, &p0, 1e-13 * ynorm)?;
    let cov = sol.covariance(y.len(), !weighted);
    let (u, v) = (sol.params[0], sol.params[1]);
    let m = DielectricModel {
        noise_floor: u.max(0.0).sqrt(),
        surface_amplitude: v.max(0.0).sqrt(),
        ..template
    };
    Ok(DielectricFit {
        model: m,
        noise_floor_err: upper_excursion(u, cov[(0, 0)]),
        surface_amplitude_err: upper_excursion(v, cov[(1, 1)]),
        squares: [u, v],
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
        weighted,
    })
}

/// The pure surface-noise law `rate = A / (kappa_d + kappa_ext)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureInverseFit {
    /// `A` in s^-1 (times the dimensionless `kappa_d + kappa_ext`).
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub kappa_d: f64,
}

impl PureInverseFit {
    pub fn value_at(&self, kappa: f64) -> f64 {
        self.amplitude / (self.kappa_d + kappa)
    }
}

/// Weighted one-parameter fit of the inverse law, for comparison with the
/// floor model.
pub fn fit_pure_inverse(points: &[KappaPoint]) -> Result<PureInverseFit> {
    if points.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    let weighted = points.iter().all(|p| p.rate_err_hz > 0.0);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in points {
        let w = if weighted { p.rate_err_hz.powi(-2) } else { 1.0 };
        let x = 1.0 / (KAPPA_DIAMOND + p.kappa);
        sxx += w * x * x;
        sxy += w * x * p.rate_hz;
    }
    let a = sxy / sxx;
    let err = if weighted {
        sxx.powf(-0.5)
    } else {
        let rss: f64 = points
            .iter()
            .map(|p| (p.rate_hz - a / (KAPPA_DIAMOND + p.kappa)).powi(2))
            .sum();
        (rss / (points.len().saturating_sub(1).max(1) as f64) / sxx).sqrt()
    };
    Ok(PureInverseFit {
        amplitude: a,
        amplitude_err: err,
        kappa_d: KAPPA_DIAMOND,
    })
}

/// `r = rate_plus0 / (rate_plusminus / 2)`.
pub fn noise_ratio(rate_plus0: f64, rate_plusminus: f64) -> Result<f64> {
    if !(rate_plus0 > 0.0 && rate_plusminus > 0.0) {
        return Err(Error::invalid("noise ratio needs two positive rates"));
    }
    Ok(rate_plus0 / (rate_plusminus / 2.0))
}

/// Quasi-static Gaussian fluctuations feeding `Delta_2`; standard
/// deviations in rad/s (`delta_d`, `delta_omega1`) and tesla (`bz`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta2Fluctuations {
    pub delta_d_std: f64,
    pub delta_omega1_std: f64,
    pub bz_mean: f64,
    pub bz_std: f64,
    pub seed: u64,
    pub n_samples: usize,
}

impl Delta2Fluctuations {
    pub fn none(seed: u64, n_samples: usize) -> Self {
        Delta2Fluctuations {
            delta_d_std: 0.0,
            delta_omega1_std: 0.0,
            bz_mean: 0.0,
            bz_std: 0.0,
            seed,
            n_samples,
        }
    }

    fn validate(&self) -> Result<()> {
        let stds = [self.delta_d_std, self.delta_omega1_std, self.bz_std];
        if !stds.iter().all(|s| s.is_finite() && *s >= 0.0) || !self.bz_mean.is_finite() {
            return Err(Error::invalid("fluctuation widths must be finite and >= 0"));
        }
        if self.n_samples < MIN_ENSEMBLE {
            return Err(Error::invalid(format!(
                "ensemble needs >= {MIN_ENSEMBLE} samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

fn delta2_block(c: &NvConstants, d: &DriveParameters, fl: &Delta2Fluctuations, block: usize, len: usize) -> Vec<f64> {
    let mut rng = block_rng(fl.seed, block);
    (0..len)
        .map(|_| {
            let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let n = NoisePerturbation {
                delta_d: fl.delta_d_std * z[0],
                delta_omega1: fl.delta_omega1_std * z[1],
            };
            let f = FieldEnvironment::bz(fl.bz_mean + fl.bz_std * z[2]);
            detuning_delta2(c, &f, d, &n)
        })
        .collect()
}

/// Ensemble samples of `Delta_2`, rad/s.
pub fn delta2_samples(c: &NvConstants, d: &DriveParameters, fl: &Delta2Fluctuations) -> Result<Vec<f64>> {
    fl.validate()?;
    let n = fl.n_samples;
    Ok((0..n.div_ceil(BLOCK_SIZE))
        .flat_map(|b| delta2_block(c, d, fl, b, (n - b * BLOCK_SIZE).min(BLOCK_SIZE)))
        .collect())
}

/// Ensemble-averaged `|+1>_d <-> |-1>_d` fringe
/// `1/2 (1 + <cos((Omega_2 + 2 Delta_2^2 / Omega_2) t)>)`.
pub fn delta2_dephasing_trace(
    c: &NvConstants,
    d: &DriveParameters,
    fl: &Delta2Fluctuations,
    times: &[f64],
) -> Result<SignalTrace> {
    c.validate()?;
    d.validate()?;
    if !(d.omega2 > 0.0) {
        return Err(Error::invalid("the Delta_2 fringe needs Omega_2 > 0"));
    }
    check_times(times)?;
    let delta2 = delta2_samples(c, d, fl)?;
    let mean = ensemble_cosine(fl.n_samples, times, |b, i| {
        let x = delta2[b * BLOCK_SIZE + i];
        d.omega2 + 2.0 * x * x / d.omega2
    });
    let values = mean.iter().map(|m| 0.5 * (1.0 + m)).collect();
    let mut meta = TraceMetadata {
        constants: Some(*c),
        drive: Some(*d),
        engine: Some("analytic".into()),
        seed: Some(fl.seed),
        ..Default::default()
    };
    meta.extra.insert("fluctuations".into(), serde_json::to_value(fl).expect("serializable"));
    SignalTrace::new(times.to_vec(), values, Sampling::Dense, meta)
}

/// Dephasing rate (s^-1) from the `delta D / 2` term for a Gaussian `delta D`
/// of standard deviation `delta_d_std_hz` (cyclic Hz): `pi std / sqrt(2)`.
pub fn temperature_budget(delta_d_std_hz: f64) -> Result<f64> {
    if !(delta_d_std_hz.is_finite() && delta_d_std_hz >= 0.0) {
        return Err(Error::invalid("delta D std must be >= 0"));
    }
    Ok(PI * delta_d_std_hz / SQRT_2)
}

/// The `delta D` standard deviation (Hz) that alone yields `rate`.
pub fn temperature_budget_std(rate: f64) -> Result<f64> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::invalid("rate must be >= 0"));
    }
    Ok(SQRT_2 * rate / PI)
}
