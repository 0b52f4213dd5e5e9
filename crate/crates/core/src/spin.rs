// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Spin-1 operator algebra over the fixed basis `(|+1>, |0>, |-1>)`.
//!
//! Every matrix literal in this crate uses that row/column order: index 0 is
//! `m_s = +1`, index 1 is `m_s = 0`, index 2 is `m_s = -1`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Relative tolerance used when a matrix is asserted to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Max-norm tolerance on `U^dagger U - I` for unitary-role matrices.
pub const UNITARY_TOL: f64 = 1e-9;
/// Tolerance on `| ||psi|| - 1 |` for states.
pub const NORM_TOL: f64 = 1e-9;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Basis level labels in the fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Plus,
    Zero,
    Minus,
}

impl Level {
    pub const fn index(self) -> usize {
        match self {
            Level::Plus => 0,
            Level::Zero => 1,
            Level::Minus => 2,
        }
    }
}

/// A 3x3 complex matrix acting on the spin-1 space.
#[derive(Clone, Copy, PartialEq)]
pub struct SpinMatrix(pub Matrix3<C64>);

impl SpinMatrix {
    pub fn zeros() -> Self {
        SpinMatrix(Matrix3::zeros())
    }

    pub fn identity() -> Self {
        SpinMatrix(Matrix3::identity())
    }

    pub fn from_diagonal(d: [C64; 3]) -> Self {
        SpinMatrix(Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2])))
    }

    pub fn from_real_diagonal(d: [f64; 3]) -> Self {
        Self::from_diagonal([c(d[0], 0.0), c(d[1], 0.0), c(d[2], 0.0)])
    }

    /// Row-major construction.
    pub fn from_rows(rows: [[C64; 3]; 3]) -> Self {
        SpinMatrix(Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        ))
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &SpinState, b: &SpinState) -> Self {
        SpinMatrix(a.0 * b.0.adjoint())
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        SpinMatrix(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        SpinMatrix(self.0 * c(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        SpinMatrix(self.0 * s)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &SpinMatrix) -> SpinMatrix {
        *self * *other - *other * *self
    }

    pub fn anticommutator(&self, other: &SpinMatrix) -> SpinMatrix {
        *self * *other + *other * *self
    }

    /// `max |H - H^dagger|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        (*self - self.dagger()).max_norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_deviation() <= HERMITIAN_TOL * self.max_norm()
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_deviation(&self) -> f64 {
        (self.dagger() * *self - SpinMatrix::identity()).max_norm()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_deviation() <= UNITARY_TOL
    }

    pub fn apply(&self, psi: &SpinState) -> SpinState {
        SpinState(self.0 * psi.0)
    }

    /// Real eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
    pub fn eigh(&self) -> Result<(Vector3<f64>, Matrix3<C64>)> {
        check_hermitian(self)?;
        let (w, v) = eigh_unchecked(self);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
        let ws = Vector3::new(w[order[0]], w[order[1]], w[order[2]]);
        let mut vs = Matrix3::zeros();
        for (k, &i) in order.iter().enumerate() {
            vs.set_column(k, &v.column(i));
        }
        Ok((ws, vs))
    }

    /// `|tr(A^dagger B)|^2 / 9`, the gate fidelity between two unitaries.
    pub fn gate_fidelity(&self, other: &SpinMatrix) -> f64 {
        (self.dagger() * *other).trace().norm_sqr() / 9.0
    }
}

impl fmt::Debug for SpinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SpinMatrix [")?;
        for r in 0..3 {
            write!(f, "  ")?;
            for col in 0..3 {
                let z = self.0[(r, col)];
                write!(f, "{:>+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Add for SpinMatrix {
    type Output = SpinMatrix;
    fn add(self, rhs: SpinMatrix) -> SpinMatrix {
        SpinMatrix(self.0 + rhs.0)
    }
}

impl Sub for SpinMatrix {
    type Output = SpinMatrix;
    fn sub(self, rhs: SpinMatrix) -> SpinMatrix {
        SpinMatrix(self.0 - rhs.0)
    }
}

impl Neg for SpinMatrix {
    type Output = SpinMatrix;
    fn neg(self) -> SpinMatrix {
        SpinMatrix(-self.0)
    }
}

impl Mul for SpinMatrix {
    type Output = SpinMatrix;
    fn mul(self, rhs: SpinMatrix) -> SpinMatrix {
        SpinMatrix(self.0 * rhs.0)
    }
}

impl Mul<SpinState> for SpinMatrix {
    type Output = SpinState;
    fn mul(self, rhs: SpinState) -> SpinState {
        SpinState(self.0 * rhs.0)
    }
}

impl Mul<f64> for SpinMatrix {
    type Output = SpinMatrix;
    fn mul(self, rhs: f64) -> SpinMatrix {
        self.scale(rhs)
    }
}

/// A pure state, amplitudes in basis order `(|+1>, |0>, |-1>)`.
#[derive(Clone, Copy, PartialEq)]
pub struct SpinState(pub Vector3<C64>);

impl SpinState {
    /// Builds a state, rejecting amplitudes whose norm is not 1 within 1e-9.
    pub fn new(amplitudes: [C64; 3]) -> Result<Self> {
        let s = SpinState(Vector3::new(amplitudes[0], amplitudes[1], amplitudes[2]));
        let dev = (s.norm() - 1.0).abs();
        if dev > NORM_TOL {
            return Err(Error::invalid(format!(
                "state norm deviates from 1 by {dev:e}"
            )));
        }
        Ok(s)
    }

    /// Builds a state by normalizing arbitrary (nonzero) amplitudes.
    pub fn normalized(amplitudes: [C64; 3]) -> Result<Self> {
        let v = Vector3::new(amplitudes[0], amplitudes[1], amplitudes[2]);
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(SpinState(v / c(n, 0.0)))
    }

    pub fn basis(level: Level) -> Self {
        let mut v = Vector3::zeros();
        v[level.index()] = c(1.0, 0.0);
        SpinState(v)
    }

    pub fn plus() -> Self {
        Self::basis(Level::Plus)
    }

    pub fn zero() -> Self {
        Self::basis(Level::Zero)
    }

    pub fn minus() -> Self {
        Self::basis(Level::Minus)
    }

    pub fn amplitudes(&self) -> [C64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn amplitude(&self, level: Level) -> C64 {
        self.0[level.index()]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &SpinState) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn population(&self, level: Level) -> f64 {
        self.0[level.index()].norm_sqr()
    }

    pub fn populations(&self) -> [f64; 3] {
        [
            self.0[0].norm_sqr(),
            self.0[1].norm_sqr(),
            self.0[2].norm_sqr(),
        ]
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.inner(other).norm_sqr()
    }
}

impl fmt::Debug for SpinState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpinState(")?;
        for (i, z) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:+.6}{:+.6}i", z.re, z.im)?;
        }
        write!(f, ")")
    }
}

/// The spin-1 angular-momentum matrices (Condon-Shortley phases).
#[derive(Debug, Clone, Copy)]
pub struct SpinOperators {
    pub sx: SpinMatrix,
    pub sy: SpinMatrix,
    pub sz: SpinMatrix,
}

impl SpinOperators {
    pub fn sz2(&self) -> SpinMatrix {
        self.sz * self.sz
    }

    /// `Sx^2 - Sy^2`, which is `|+1><-1| + |-1><+1|`.
    pub fn sx2_minus_sy2(&self) -> SpinMatrix {
        self.sx * self.sx - self.sy * self.sy
    }

    /// `Sx Sy + Sy Sx`.
    pub fn sxsy_plus_sysx(&self) -> SpinMatrix {
        self.sx.anticommutator(&self.sy)
    }
}

pub fn spin_operators() -> SpinOperators {
    let a = FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let r = c(a, 0.0);
    let i = c(0.0, a);
    // rows/cols: (+1, 0, -1)
    let sx = SpinMatrix::from_rows([[z, r, z], [r, z, r], [z, r, z]]);
    let sy = SpinMatrix::from_rows([[z, -i, z], [i, z, -i], [z, i, z]]);
    let sz = SpinMatrix::from_real_diagonal([1.0, 0.0, -1.0]);
    SpinOperators { sx, sy, sz }
}

pub(crate) fn check_hermitian(h: &SpinMatrix) -> Result<()> {
    let deviation = h.hermiticity_deviation();
    if !(deviation <= HERMITIAN_TOL * h.max_norm()) {
        return Err(Error::NonHermitianInput { deviation });
    }
    Ok(())
}

/// Eigendecomposition of a matrix assumed Hermitian; only the lower triangle
/// is read.
pub(crate) fn eigh_unchecked(h: &SpinMatrix) -> (Vector3<f64>, Matrix3<C64>) {
    let eig = SymmetricEigen::new(h.0);
    (eig.eigenvalues, eig.eigenvectors)
}

/// `exp(-i H t)` for Hermitian `H` without the Hermiticity check.
pub(crate) fn expm_unchecked(h: &SpinMatrix, t: f64) -> SpinMatrix {
    let (w, v) = eigh_unchecked(h);
    let phases = Vector3::new(
        C64::from_polar(1.0, -w[0] * t),
        C64::from_polar(1.0, -w[1] * t),
        C64::from_polar(1.0, -w[2] * t),
    );
    let mut vp = v;
    for col in 0..3 {
        let p = phases[col];
        for row in 0..3 {
            vp[(row, col)] *= p;
        }
    }
    SpinMatrix(vp * v.adjoint())
}

/// `exp(-i H t)` computed by eigendecomposition of the Hermitian generator.
pub fn matrix_exponential(h: &SpinMatrix, t: f64) -> Result<SpinMatrix> {
    check_hermitian(h)?;
    if !t.is_finite() {
        return Err(Error::invalid("propagation time must be finite"));
    }
    Ok(expm_unchecked(h, t))
}

/// The dressed eigenstates, labelled as in the dressed-frame Hamiltonian.
#[derive(Debug, Clone, Copy)]
pub struct DressedBasis {
    /// `(|+1> + |-1>)/sqrt(2)`, the bright state.
    pub plus_d: SpinState,
    /// `(|+1> - |-1>)/sqrt(2)`, the dark state.
    pub zero_d: SpinState,
    /// `|0>`.
    pub minus_d: SpinState,
}

impl DressedBasis {
    /// Change-of-basis matrix whose columns are `(plus_d, zero_d, minus_d)`.
    /// Maps dressed-basis coordinates to bare-basis coordinates.
    pub fn matrix(&self) -> SpinMatrix {
        let mut m = Matrix3::zeros();
        m.set_column(0, &self.plus_d.0);
        m.set_column(1, &self.zero_d.0);
        m.set_column(2, &self.minus_d.0);
        SpinMatrix(m)
    }

    pub fn states(&self) -> [SpinState; 3] {
        [self.plus_d, self.zero_d, self.minus_d]
    }

    /// Populations of `psi` in `(plus_d, zero_d, minus_d)`.
    pub fn populations(&self, psi: &SpinState) -> [f64; 3] {
        [
            self.plus_d.fidelity(psi),
            self.zero_d.fidelity(psi),
            self.minus_d.fidelity(psi),
        ]
    }
}

pub fn dressed_basis() -> DressedBasis {
    let a = c(FRAC_1_SQRT_2, 0.0);
    let z = c(0.0, 0.0);
    DressedBasis {
        plus_d: SpinState(Vector3::new(a, z, a)),
        zero_d: SpinState(Vector3::new(a, z, -a)),
        minus_d: SpinState::zero(),
    }
}

/// Serializable complex number used by the JSON surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ComplexValue {
    fn from(z: C64) -> Self {
        ComplexValue { re: z.re, im: z.im }
    }
}
