// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! FFT spectra, Lorentzian peak fits and (damped) sinusoid fits.
//!
//! Frequencies in this module are ordinary (Hz), matching how spectra and
//! fit results are reported.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{linear_lstsq, minimize, Residuals};
use crate::trace::SignalTrace;

/// Minimum samples accepted by the spectral routines.
pub const MIN_SAMPLES: usize = 16;
/// Relative spacing deviation tolerated on a "uniform" grid.
pub const GRID_TOL: f64 = 1e-6;
/// Peak threshold in units of the median spectral amplitude.
pub const PEAK_THRESHOLD: f64 = 5.0;
/// Relative amplitude below which spectral structure is floating-point noise.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    /// Transform length as a multiple of the sample count.
    pub zero_pad: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            window: Window::None,
            zero_pad: 1,
        }
    }
}

/// One-sided amplitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub resolution: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Index of the bin closest to `f`.
    pub fn bin_of(&self, f: f64) -> usize {
        ((f / self.resolution).round().max(0.0) as usize).min(self.len().saturating_sub(1))
    }
}

/// Sampling interval of a uniform grid.
pub fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: times.len() });
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::NonUniformGrid { deviation: f64::INFINITY });
    }
    let deviation = times
        .windows(2)
        .map(|w| ((w[1] - w[0]) - dt).abs() / dt)
        .fold(0.0, f64::max);
    if deviation > GRID_TOL {
        return Err(Error::NonUniformGrid { deviation });
    }
    Ok(dt)
}

pub fn fft_spectrum(trace: &SignalTrace) -> Result<Spectrum> {
    fft_spectrum_with(&trace.times, &trace.values, &SpectrumOptions::default())
}

/// Amplitude `2|X_k| / sum(w)` (the Nyquist bin without the factor 2) of the
/// mean-removed, optionally windowed and zero-padded samples. Without a
/// window or padding, `sum_k A_k^2 / 2` (Nyquist `A^2`) equals the variance.
pub fn fft_spectrum_with(times: &[f64], values: &[f64], opts: &SpectrumOptions) -> Result<Spectrum> {
    let n = times.len();
    if values.len() != n {
        return Err(Error::invalid("times and values differ in length"));
    }
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { required: MIN_SAMPLES, got: n });
    }
    if opts.zero_pad == 0 {
        return Err(Error::invalid("zero_pad must be >= 1"));
    }
    let dt = uniform_step(times)?;
    let mean = values.iter().sum::<f64>() / n as f64;
    let npad = n * opts.zero_pad;
    let window: Vec<f64> = match opts.window {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos())
            .collect(),
    };
    let wsum: f64 = window.iter().sum();
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let flat = values.iter().all(|v| (v - mean).abs() <= 1e-12 * scale);

    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); npad];
    if !flat {
        for i in 0..n {
            buf[i] = Complex::new((values[i] - mean) * window[i], 0.0);
        }
        FftPlanner::new().plan_fft_forward(npad).process(&mut buf);
    }
    let fs = 1.0 / dt;
    let half = npad / 2;
    let mut frequencies = Vec::with_capacity(half + 1);
    let mut amplitudes = Vec::with_capacity(half + 1);
    for (k, z) in buf.iter().enumerate().take(half + 1) {
        frequencies.push(k as f64 * fs / npad as f64);
        let nyquist = npad % 2 == 0 && k == half;
        let factor = if k == 0 || nyquist { 1.0 } else { 2.0 };
        amplitudes.push(factor * z.norm() / wsum);
    }
    Ok(Spectrum {
        frequencies,
        amplitudes,
        resolution: fs / npad as f64,
    })
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(a: &[f64], i: usize) -> f64 {
    let side = |dir: isize| -> f64 {
        let mut low = a[i];
        let mut j = i as isize + dir;
        while j >= 1 && (j as usize) < a.len() {
            let aj = a[j as usize];
            if aj > a[i] {
                break;
            }
            low = low.min(aj);
            j += dir;
        }
        low
    };
    a[i] - side(-1).max(side(1))
}

/// Noise level from the median of first differences (MAD-style).
fn noise_level(a: &[f64]) -> f64 {
    let d: Vec<f64> = a.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    1.4826 * median(&d) / std::f64::consts::SQRT_2
}

/// Local maxima (excluding DC) above `PEAK_THRESHOLD` times the median
/// amplitude, strongest first. Maxima whose prominence does not clear eight
/// times the bin-to-bin noise are ripples on a larger peak and are dropped,
/// as are maxima below `ROUNDOFF_FLOOR` of the largest non-DC bin.
pub fn find_peaks(s: &Spectrum) -> Vec<usize> {
    let a = &s.amplitudes;
    if a.len() < 3 {
        return Vec::new();
    }
    let largest = a[1..].iter().copied().fold(0.0, f64::max);
    let threshold = (PEAK_THRESHOLD * median(&a[1..])).max(ROUNDOFF_FLOOR * largest);
    let min_prominence = 8.0 * noise_level(&a[1..]);
    let mut peaks: Vec<usize> = (1..a.len())
        .filter(|&i| {
            let left = a[i - 1];
            let right = if i + 1 < a.len() { a[i + 1] } else { f64::NEG_INFINITY };
            a[i] > 0.0 && a[i] > threshold && a[i] > left && a[i] >= right
        })
        .filter(|&i| prominence(a, i) > min_prominence)
        .collect();
    peaks.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    peaks
}

/// Center of the dominant peak refined by a parabola through three bins.
pub fn dominant_frequency(s: &Spectrum) -> Option<f64> {
    let peaks = find_peaks(s);
    let &i = peaks.first()?;
    let a = &s.amplitudes;
    if i + 1 >= a.len() {
        return Some(s.frequencies[i]);
    }
    let (l, c, r) = (a[i - 1], a[i], a[i + 1]);
    let denom = l - 2.0 * c + r;
    let shift = if denom.abs() > 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    Some(s.frequencies[i] + shift.clamp(-0.5, 0.5) * s.resolution)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center: f64,
    /// Full width at half maximum.
    pub width: f64,
    pub amplitude: f64,
    pub center_err: f64,
    pub width_err: f64,
    pub amplitude_err: f64,
}

impl PeakFit {
    pub fn value_at(&self, f: f64) -> f64 {
        lorentzian(self.amplitude, self.center, self.width, f)
    }
}

fn lorentzian(a: f64, f0: f64, w: f64, f: f64) -> f64 {
    let x = 2.0 * (f - f0) / w;
    a / (1.0 + x * x)
}

/// Peaks fit jointly where their windows overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakGroup {
    pub peaks: Vec<usize>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    /// Sorted by center.
    pub peaks: Vec<PeakFit>,
    pub groups: Vec<PeakGroup>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl LorentzianFit {
    /// Residual norm of the stored parameters against `s` over the fitted
    /// bins.
    pub fn residual_norm_on(&self, s: &Spectrum) -> f64 {
        let mut ss = 0.0;
        for g in &self.groups {
            for &i in &g.indices {
                let f = s.frequencies[i];
                let m: f64 = g.peaks.iter().map(|&p| self.peaks[p].value_at(f)).sum();
                ss += (m - s.amplitudes[i]).powi(2);
            }
        }
        ss.sqrt()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.amplitude).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Seed {
    index: usize,
    center: f64,
    amplitude: f64,
    width: f64,
}

fn half_width_estimate(s: &Spectrum, i: usize) -> f64 {
    let a = &s.amplitudes;
    let half = 0.5 * a[i];
    let walk = |dir: isize| -> Option<f64> {
        let mut j = i as isize;
        loop {
            let next = j + dir;
            if next < 0 || next as usize >= a.len() {
                return None;
            }
            let (aj, an) = (a[j as usize], a[next as usize]);
            if an <= half {
                let frac = if aj > an { (aj - half) / (aj - an) } else { 0.0 };
                return Some((j as usize as f64 + dir as f64 * frac - i as f64).abs() * s.resolution);
            }
            j = next;
        }
    };
    match (walk(-1), walk(1)) {
        (Some(l), Some(r)) => l + r,
        (Some(h), None) | (None, Some(h)) => 2.0 * h,
        (None, None) => 2.0 * s.resolution,
    }
    .max(s.resolution)
}

/// Bins around a seed until the amplitude rises clearly above the running
/// minimum (a neighbouring feature) or the walk exceeds four widths.
fn window_around(s: &Spectrum, seed: &Seed) -> (usize, usize) {
    let a = &s.amplitudes;
    let cap = ((4.0 * seed.width / s.resolution).ceil() as usize).max(3);
    let rise = 0.05 * seed.amplitude;
    let walk = |dir: isize| -> usize {
        let mut j = seed.index as isize;
        let mut low = a[seed.index];
        for _ in 0..cap {
            let next = j + dir;
            if next < 1 || next as usize >= a.len() {
                break;
            }
            let an = a[next as usize];
            if an > low + rise {
                break;
            }
            low = low.min(an);
            j = next;
        }
        j as usize
    };
    (walk(-1), walk(1))
}

struct LorentzSum<'a> {
    f: &'a [f64],
    y: &'a [f64],
    f_ref: f64,
    f_scale: f64,
    a_scale: f64,
}

impl Residuals for LorentzSum<'_> {
    fn len(&self) -> usize {
        self.f.len()
    }

    fn eval(&self, p: &[f64], r: &mut DVector<f64>, mut jac: Option<&mut DMatrix<f64>>) {
        let k = p.len() / 3;
        for (i, &fi) in self.f.iter().enumerate() {
            let x = (fi - self.f_ref) / self.f_scale;
            let mut m = 0.0;
            for q in 0..k {
                let (a, x0, w) = (p[3 * q], p[3 * q + 1], p[3 * q + 2]);
                let u = 2.0 * (x - x0) / w;
                let den = 1.0 + u * u;
                m += a / den;
                if let Some(j) = jac.as_deref_mut() {
                    let d_du = -2.0 * a * u / (den * den);
                    j[(i, 3 * q)] = 1.0 / den;
                    j[(i, 3 * q + 1)] = d_du * (-2.0 / w);
                    j[(i, 3 * q + 2)] = d_du * (-u / w);
                }
            }
            r[i] = m - self.y[i] / self.a_scale;
        }
    }
}

/// Fits `k` Lorentzians initialized from the `k` strongest local maxima.
/// With fewer maxima than `k`, the strongest seed is split at a quarter of
/// its width on either side (overlapping lines).
pub fn fit_lorentzian_peaks(s: &Spectrum, k: usize) -> Result<LorentzianFit> {
    if k == 0 {
        return Err(Error::invalid("expected peak count must be >= 1"));
    }
    let found = find_peaks(s);
    if found.is_empty() {
        return Err(Error::fit("no spectral peaks above threshold", 0.0));
    }
    let mut seeds: Vec<Seed> = found
        .iter()
        .take(k)
        .map(|&i| Seed {
            index: i,
            center: s.frequencies[i],
            amplitude: s.amplitudes[i],
            width: half_width_estimate(s, i),
        })
        .collect();
    while seeds.len() < k {
        // seeds are kept strongest-first
        let top = seeds.remove(0);
        let offset = 0.25 * top.width;
        let child = |c: f64| Seed {
            index: top.index,
            center: c,
            amplitude: 0.6 * top.amplitude,
            width: 0.7 * top.width,
        };
        seeds.push(child(top.center - offset));
        seeds.push(child(top.center + offset));
        seeds.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    }

    // windows, merged where they touch
    let mut spans: Vec<(usize, usize, Vec<usize>)> = seeds
        .iter()
        .enumerate()
        .map(|(q, sd)| {
            let (lo, hi) = window_around(s, sd);
            (lo, hi, vec![q])
        })
        .collect();
    spans.sort_by_key(|x| x.0);
    let mut merged: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for sp in spans {
        match merged.last_mut() {
            Some(last) if sp.0 <= last.1 + 1 => {
                last.1 = last.1.max(sp.1);
                last.2.extend(sp.2);
            }
            _ => merged.push(sp),
        }
    }

    let mut fitted: Vec<Option<PeakFit>> = vec![None; seeds.len()];
    let mut groups = Vec::new();
    let mut iterations = 0;
    let mut ss = 0.0;
    for (lo, hi, members) in merged {
        let need = 3 * members.len() + 1;
        let (lo, hi) = if hi + 1 - lo < need {
            let pad = (need - (hi + 1 - lo)).div_ceil(2);
            (lo.saturating_sub(pad).max(1), (hi + pad).min(s.len() - 1))
        } else {
            (lo, hi)
        };
        let idx: Vec<usize> = (lo..=hi).collect();
        let f: Vec<f64> = idx.iter().map(|&i| s.frequencies[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| s.amplitudes[i]).collect();
        let f_ref = seeds[members[0]].center;
        let f_scale = s.resolution;
        let a_scale = members.iter().map(|&q| seeds[q].amplitude).fold(0.0, f64::max);
        let model = LorentzSum { f: &f, y: &y, f_ref, f_scale, a_scale };
        let mut p0 = Vec::with_capacity(3 * members.len());
        for &q in &members {
            let sd = &seeds[q];
            p0.extend([sd.amplitude / a_scale, (sd.center - f_ref) / f_scale, sd.width / f_scale]);
        }
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt() / a_scale;
        let sol = minimize(&model, &p0, 1e-13 * ynorm).map_err(|e| match e {
            Error::FitFailure { reason, residual_norm } => Error::fit(
                format!("lorentzian fit near {f_ref:e} Hz: {reason}"),
                residual_norm * a_scale,
            ),
            other => other,
        })?;
        let se = sol.std_errors(f.len(), true);
        iterations += sol.iterations;
        ss += (sol.residual_norm * a_scale).powi(2);
        for (m, &q) in members.iter().enumerate() {
            let (a, x0, w) = (sol.params[3 * m], sol.params[3 * m + 1], sol.params[3 * m + 2]);
            if !(w.abs() > 0.0) {
                return Err(Error::fit("collapsed peak width", sol.residual_norm * a_scale));
            }
            fitted[q] = Some(PeakFit {
                center: f_ref + x0 * f_scale,
                width: w.abs() * f_scale,
                amplitude: a * a_scale,
                center_err: se[3 * m + 1] * f_scale,
                width_err: se[3 * m + 2] * f_scale,
                amplitude_err: se[3 * m] * a_scale,
            });
        }
        groups.push((members, idx));
    }

    let mut order: Vec<usize> = (0..seeds.len()).collect();
    let peaks_unsorted: Vec<PeakFit> = fitted.into_iter().map(|p| p.expect("every seed fitted")).collect();
    order.sort_by(|&a, &b| peaks_unsorted[a].center.total_cmp(&peaks_unsorted[b].center));
    let mut rank = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let peaks: Vec<PeakFit> = order.iter().map(|&q| peaks_unsorted[q]).collect();
    let groups = groups
        .into_iter()
        .map(|(members, indices)| PeakGroup {
            peaks: members.iter().map(|&q| rank[q]).collect(),
            indices,
        })
        .collect();
    let out = LorentzianFit {
        peaks,
        groups,
        residual_norm: ss.sqrt(),
        iterations,
    };
    // report exactly what the stored parameters give
    let residual_norm = out.residual_norm_on(s);
    Ok(LorentzianFit { residual_norm, ..out })
}

/// `(a sin(w t) + b cos(w t)) exp(-g t^2) + c` on rescaled time.
struct Sinusoid<'a> {
    tau: &'a [f64],
    y: &'a [f64],
    w: Option<&'a [f64]>,
    damped: bool,
}

impl Sinusoid<'_> {
    fn weight(&self, i: usize) -> f64 {
        self.w.map_or(1.0, |w| w[i])
    }
}

impl Residuals for Sinusoid<'_> {
    fn len(&self) -> usize {
        self.tau.len()
    }

    fn eval(&self, p: &[f64], r: &mut DVector<f64>, mut jac: Option<&mut DMatrix<f64>>) {
        let (a, b, om) = (p[0], p[1], p[2]);
        let (g, c) = if self.damped { (p[3], p[4]) } else { (0.0, p[3]) };
        for (i, &t) in self.tau.iter().enumerate() {
            let (s, co) = (om * t).sin_cos();
            let e = (-g * t * t).exp();
            let osc = a * s + b * co;
            let wi = self.weight(i);
            r[i] = wi * (osc * e + c - self.y[i]);
            if let Some(j) = jac.as_deref_mut() {
                j[(i, 0)] = wi * s * e;
                j[(i, 1)] = wi * co * e;
                j[(i, 2)] = wi * (a * co - b * s) * t * e;
                if self.damped {
                    j[(i, 3)] = -wi * t * t * osc * e;
                    j[(i, 4)] = wi;
                } else {
                    j[(i, 3)] = wi;
                }
            }
        }
    }
}

fn linear_amplitudes(m: &Sinusoid, om: f64, g: f64) -> Option<(DVector<f64>, f64)> {
    let n = m.tau.len();
    let mut x = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    for (i, &t) in m.tau.iter().enumerate() {
        let (s, co) = (om * t).sin_cos();
        let e = (-g * t * t).exp();
        let wi = m.weight(i);
        x[(i, 0)] = wi * s * e;
        x[(i, 1)] = wi * co * e;
        x[(i, 2)] = wi;
        y[i] = wi * m.y[i];
    }
    let beta = linear_lstsq(&x, &y)?;
    let res = (&x * &beta - &y).norm();
    Some((beta, res))
}

/// Damped-sinusoid fit result in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub frequency_hz: f64,
    pub frequency_err_hz: f64,
    /// `None` when the decay is not resolved by the trace.
    pub t2_star_s: Option<f64>,
    pub t2_star_err_s: Option<f64>,
    pub t2_star_unbounded: bool,
    /// `1 / T2*^2` as fitted, s^-2 (may be <= 0 when unresolved).
    pub decay_rate_sq: f64,
    pub decay_rate_sq_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub phase: f64,
    pub phase_err: f64,
    pub offset: f64,
    pub offset_err: f64,
    /// Correlation between frequency and `1 / T2*^2`.
    pub frequency_decay_correlation: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl DecayFit {
    /// `1 / T2*` in s^-1.
    pub fn rate(&self) -> Option<f64> {
        self.t2_star_s.map(|t| 1.0 / t)
    }

    pub fn model_at(&self, t: f64) -> f64 {
        let g = if self.decay_rate_sq.is_finite() { self.decay_rate_sq } else { 0.0 };
        self.amplitude * (TAU * self.frequency_hz * t + self.phase).sin() * (-g * t * t).exp() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub frequency_hz: f64,
    pub frequency_err_hz: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl SinusoidFit {
    pub fn model_at(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency_hz * t + self.phase).sin() + self.offset
    }
}

struct Prepared {
    tau: Vec<f64>,
    t_scale: f64,
    omega0: f64,
    span: f64,
}

fn prepare(times: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<Prepared> {
    if weights.is_some_and(|w| w.len() != times.len() || w.iter().any(|v| !(v.is_finite() && *v > 0.0))) {
        return Err(Error::invalid("weights must match the samples and be positive"));
    }
    let opts = SpectrumOptions { window: Window::None, zero_pad: 8 };
    let spec = fft_spectrum_with(times, values, &opts)?;
    let f0 = dominant_frequency(&spec).ok_or_else(|| Error::fit("no oscillation in trace", 0.0))?;
    let span = times[times.len() - 1] - times[0];
    if f0 <= 0.0 || span * f0 < 1.0 {
        return Err(Error::InsufficientSpan { span, period: if f0 > 0.0 { 1.0 / f0 } else { f64::INFINITY } });
    }
    let t_scale = times.iter().map(|t| t.abs()).fold(0.0, f64::max);
    Ok(Prepared {
        tau: times.iter().map(|t| t / t_scale).collect(),
        t_scale,
        omega0: TAU * f0 * t_scale,
        span,
    })
}

pub fn fit_damped_sinusoid(trace: &SignalTrace) -> Result<DecayFit> {
    fit_damped_sinusoid_weighted(&trace.times, &trace.values, None)
}

/// Fits `A sin(2 pi f t + phi) exp(-(t/T2*)^2) + c`. Weights multiply the
/// residuals (use `1/sigma`); without them the covariance is scaled by the
/// reduced chi-square. The envelope is referenced to `t = 0`.
pub fn fit_damped_sinusoid_weighted(times: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<DecayFit> {
    let pre = prepare(times, values, weights)?;
    let model = Sinusoid { tau: &pre.tau, y: values, w: weights, damped: true };

    // coarse search on the decay with the linear amplitudes solved exactly
    let span_tau = pre.span / pre.t_scale;
    let mut best = (f64::INFINITY, 0.0, DVector::zeros(3));
    let mut candidates = vec![0.0];
    for k in 0..48 {
        let t2 = span_tau * 0.02 * (1000f64).powf(k as f64 / 47.0);
        candidates.push(1.0 / (t2 * t2));
    }
    for g in candidates {
        if let Some((beta, res)) = linear_amplitudes(&model, pre.omega0, g) {
            if res < best.0 {
                best = (res, g, beta);
            }
        }
    }
    let (_, g0, beta) = best;
    let p0 = [beta[0], beta[1], pre.omega0, g0, beta[2]];
    let ynorm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sol = minimize(&model, &p0, 1e-13 * ynorm)?;
    let cov = sol.covariance(times.len(), weights.is_none());
    let se: Vec<f64> = (0..5).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let p = &sol.params;
    let (a, b) = (p[0], p[1]);
    let amplitude = a.hypot(b);
    let phase = b.atan2(a);
    let (var_a, var_b, cov_ab) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let amp_err = if amplitude > 0.0 {
        ((a * a * var_a + b * b * var_b + 2.0 * a * b * cov_ab) / (amplitude * amplitude)).max(0.0).sqrt()
    } else {
        f64::NAN
    };
    let phase_err = if amplitude > 0.0 {
        ((b * b * var_a + a * a * var_b - 2.0 * a * b * cov_ab) / amplitude.powi(4)).max(0.0).sqrt()
    } else {
        f64::NAN
    };
    let fscale = 1.0 / (TAU * pre.t_scale);
    let gscale = 1.0 / (pre.t_scale * pre.t_scale);
    let g = p[3] * gscale;
    let g_err = se[3] * gscale;
    let bounded = g > 0.0 && g > 2.0 * g_err && (1.0 / g.sqrt()) <= 10.0 * pre.span;
    let (t2, t2_err) = if bounded {
        let t2 = 1.0 / g.sqrt();
        (Some(t2), Some(0.5 * g.powf(-1.5) * g_err))
    } else {
        (None, None)
    };
    let corr = {
        let d = (cov[(2, 2)] * cov[(3, 3)]).sqrt();
        if d > 0.0 { cov[(2, 3)] / d } else { 0.0 }
    };
    Ok(DecayFit {
        frequency_hz: p[2] * fscale,
        frequency_err_hz: se[2] * fscale,
        t2_star_s: t2,
        t2_star_err_s: t2_err,
        t2_star_unbounded: !bounded,
        decay_rate_sq: g,
        decay_rate_sq_err: g_err,
        amplitude,
        amplitude_err: amp_err,
        phase,
        phase_err,
        offset: p[4],
        offset_err: se[4],
        frequency_decay_correlation: corr,
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
    })
}

pub fn fit_sinusoid(trace: &SignalTrace) -> Result<SinusoidFit> {
    fit_sinusoid_weighted(&trace.times, &trace.values, None)
}

/// Undamped `A sin(2 pi f t + phi) + c`.
pub fn fit_sinusoid_weighted(times: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<SinusoidFit> {
    let pre = prepare(times, values, weights)?;
    let model = Sinusoid { tau: &pre.tau, y: values, w: weights, damped: false };
    let (beta, _) = linear_amplitudes(&model, pre.omega0, 0.0)
        .ok_or_else(|| Error::fit("linear initialization failed", f64::NAN))?;
    let p0 = [beta[0], beta[1], pre.omega0, beta[2]];
    let ynorm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sol = minimize(&model, &p0, 1e-13 * ynorm)?;
    let se = sol.std_errors(times.len(), weights.is_none());
    let p = &sol.params;
    let fscale = 1.0 / (TAU * pre.t_scale);
    Ok(SinusoidFit {
        frequency_hz: p[2] * fscale,
        frequency_err_hz: se[2] * fscale,
        amplitude: p[0].hypot(p[1]),
        phase: p[1].atan2(p[0]),
        offset: p[3],
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
    })
}
