// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Damped Gauss-Newton (Levenberg-Marquardt) over small parameter vectors
//! with caller-supplied analytic Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_ITERATIONS: usize = 200;
/// Relative step size at which the iteration is declared converged.
pub(crate) const STEP_TOL: f64 = 1e-10;
/// Relative cost reduction of a near-Gauss-Newton step at convergence.
const COST_TOL: f64 = 1e-12;
/// Cosine between residual and Jacobian columns at convergence.
const GRAD_TOL: f64 = 1e-12;

/// Fills residuals `r` (length m) and Jacobian `J` (m x n) at parameters `p`.
pub(crate) trait Residuals {
    fn len(&self) -> usize;
    fn eval(&self, p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>);
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub params: Vec<f64>,
    /// Inverse of `J^T J` at the solution (unscaled).
    pub normal_inverse: DMatrix<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl Solution {
    /// Parameter covariance; `scaled` multiplies by the reduced chi-square,
    /// as for unit or unknown weights.
    pub fn covariance(&self, m: usize, scaled: bool) -> DMatrix<f64> {
        let n = self.params.len();
        if scaled {
            let dof = m.saturating_sub(n).max(1) as f64;
            &self.normal_inverse * (self.residual_norm * self.residual_norm / dof)
        } else {
            self.normal_inverse.clone()
        }
    }

    pub fn std_errors(&self, m: usize, scaled: bool) -> Vec<f64> {
        let cov = self.covariance(m, scaled);
        (0..self.params.len()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect()
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn invert_normal(a: &DMatrix<f64>) -> DMatrix<f64> {
    match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => a
            .clone()
            .pseudo_inverse(1e-14 * a.amax().max(f64::MIN_POSITIVE))
            .unwrap_or_else(|_| DMatrix::from_element(a.nrows(), a.ncols(), f64::NAN)),
    }
}

fn gradient_cosine(j: &DMatrix<f64>, r: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let rn = r.norm();
    let mut worst: f64 = 0.0;
    for (k, col) in j.column_iter().enumerate() {
        let cn = col.norm();
        if cn > 0.0 && rn > 0.0 {
            worst = worst.max(g[k].abs() / (cn * rn));
        }
    }
    worst
}

/// Minimizes `||r(p)||^2` from `p0`. `floor` is an absolute residual norm
/// below which the fit counts as exact.
pub(crate) fn minimize<R: Residuals>(model: &R, p0: &[f64], floor: f64) -> Result<Solution> {
    let m = model.len();
    let n = p0.len();
    if m < n {
        return Err(Error::InsufficientSamples { required: n, got: m });
    }
    let mut p = DVector::from_column_slice(p0);
    let mut r = DVector::zeros(m);
    let mut j = DMatrix::zeros(m, n);
    model.eval(p.as_slice(), &mut r, Some(&mut j));
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::fit("non-finite residual at the initial guess", f64::NAN));
    }
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut r_try = DVector::zeros(m);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        if r.norm() <= floor {
            converged = true;
            break;
        }
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        if gradient_cosine(&j, &r, &g) <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let amax = a.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = a.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-12 * amax);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let p_try = &p + &step;
            model.eval(p_try.as_slice(), &mut r_try, None);
            let c_try = cost(&r_try);
            if c_try.is_finite() && c_try < c {
                let small = step.norm() <= STEP_TOL * (p_try.norm() + STEP_TOL);
                let stalled = c - c_try <= COST_TOL * c;
                let near_gauss_newton = lambda <= 1.0;
                p = p_try;
                c = c_try;
                model.eval(p.as_slice(), &mut r, Some(&mut j));
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if (small || stalled) && near_gauss_newton {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: stationary up to round-off
            let g = j.transpose() * &r;
            converged = gradient_cosine(&j, &r, &g) <= 1e-6;
            break;
        }
    }

    // final residual is recomputed so the reported norm matches exactly
    model.eval(p.as_slice(), &mut r, Some(&mut j));
    let residual_norm = r.norm();
    if !converged {
        return Err(Error::fit(
            format!("no convergence after {iterations} iterations"),
            residual_norm,
        ));
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::fit("non-finite parameters", residual_norm));
    }
    let normal_inverse = invert_normal(&(j.transpose() * &j));
    Ok(Solution {
        params: p.as_slice().to_vec(),
        normal_inverse,
        residual_norm,
        iterations,
    })
}

/// Weighted linear least squares `min ||W (X b - y)||`; returns `b`.
pub(crate) fn linear_lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    svd.solve(y, 1e-13 * svd.singular_values.amax()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for Exponential {
        fn len(&self) -> usize {
            self.t.len()
        }
        fn eval(&self, p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
            let (a, k) = (p[0], p[1]);
            for (i, &t) in self.t.iter().enumerate() {
                r[i] = a * (-k * t).exp() - self.y[i];
            }
            if let Some(j) = jac {
                for (i, &t) in self.t.iter().enumerate() {
                    let e = (-k * t).exp();
                    j[(i, 0)] = e;
                    j[(i, 1)] = -a * t * e;
                }
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-0.7 * t).exp()).collect();
        let m = Exponential { t, y };
        let s = minimize(&m, &[1.0, 0.1], 1e-14).unwrap();
        assert!((s.params[0] - 2.5).abs() < 1e-9);
        assert!((s.params[1] - 0.7).abs() < 1e-9);
        assert!(s.iterations <= MAX_ITERATIONS);
    }

    #[test]
    fn covariance_matches_linear_theory() {
        // y = a exp(-k t) + noise-free: covariance of a at fixed design
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = t.iter().enumerate().map(|(i, t)| 1.0 * (-t).exp() + if i % 2 == 0 { 1e-3 } else { -1e-3 }).collect();
        let m = Exponential { t, y };
        let s = minimize(&m, &[0.5, 0.5], 0.0).unwrap();
        let se = s.std_errors(20, true);
        assert!(se.iter().all(|v| *v > 0.0 && *v < 1e-2));
    }
}
