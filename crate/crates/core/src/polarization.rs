//! Qubit states, Pauli structure and fidelity measures.
//!
//! The computational basis is `{|R⟩, |L⟩}`, the basis in which the memory
//! stores the two circular components. With the phase convention fixed in
//! [`NamedState::ket`], the Pauli operators line up with the analysis bases:
//! `σ₁` is diagonal in H/V, `σ₂` in D/A and `σ₃` in R/L.

use std::fmt;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues in `[-CLAMP_TOL, 0)` are rounding noise and are clamped to zero.
pub const CLAMP_TOL: f64 = 1e-10;
/// Eigenvalues below this are treated as a genuinely non-PSD input.
pub const REJECT_TOL: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// The Pauli operators `[σ₀ = I, σ₁, σ₂, σ₃]` in the R/L basis.
pub fn pauli_basis() -> [Mat2; 4] {
    [
        Mat2::new(ONE, ZERO, ZERO, ONE),
        Mat2::new(ZERO, ONE, ONE, ZERO),
        Mat2::new(ZERO, -I, I, ZERO),
        Mat2::new(ONE, ZERO, ZERO, -ONE),
    ]
}

pub fn pauli(index: usize) -> Mat2 {
    pauli_basis()[index]
}

/// Largest entry-wise modulus of `m - m†`.
pub(crate) fn hermitian_defect<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `(m + m†) / 2`.
pub(crate) fn hermitize<const N: usize>(
    m: &nalgebra::SMatrix<C64, N, N>,
) -> nalgebra::SMatrix<C64, N, N> {
    (m + m.adjoint()).scale(0.5)
}

fn to_dynamic<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>) -> DMatrix<C64> {
    DMatrix::from_iterator(N, N, m.iter().copied())
}

fn from_dynamic<const N: usize>(m: &DMatrix<C64>) -> nalgebra::SMatrix<C64, N, N> {
    nalgebra::SMatrix::<C64, N, N>::from_iterator(m.iter().copied())
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues in ascending order.
pub(crate) fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub(crate) fn eigenvalues<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>) -> Vec<f64> {
    eigh(&to_dynamic(&hermitize(m))).0
}

/// Rebuild `V diag(f(λ)) V†`.
fn spectral_map(values: &[f64], vectors: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let n = values.len();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let v = vectors.column(k);
        out += (v * v.adjoint()).scale(f(lambda));
    }
    out
}

/// Positive square root of a Hermitian PSD matrix of dimension 2 or 4.
///
/// Eigenvalues in `[-1e-10, 0)` are clamped to zero; anything below `-1e-6`
/// is rejected.
pub fn psd_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = m.nrows();
    if n != m.ncols() || !(n == 2 || n == 4) {
        return Err(Error::param(format!(
            "psd_sqrt expects a 2x2 or 4x4 matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let defect = (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if defect > 1e-9 * scale {
        return Err(Error::state(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    let h = (m + m.adjoint()).scale(0.5);
    let (values, vectors) = eigh(&h);
    if let Some(&min) = values.first() {
        if min < -REJECT_TOL {
            return Err(Error::state(format!(
                "matrix has a negative eigenvalue {min:e}"
            )));
        }
    }
    Ok(spectral_map(&values, &vectors, |l| l.max(0.0).sqrt()))
}

fn psd_sqrt_fixed<const N: usize>(
    m: &nalgebra::SMatrix<C64, N, N>,
) -> Result<nalgebra::SMatrix<C64, N, N>> {
    psd_sqrt(&to_dynamic(m)).map(|r| from_dynamic(&r))
}

/// Uhlmann fidelity `(Tr √(√a b √a))²` for PSD matrices.
fn uhlmann<const N: usize>(
    a: &nalgebra::SMatrix<C64, N, N>,
    b: &nalgebra::SMatrix<C64, N, N>,
) -> Result<f64> {
    let sa = psd_sqrt_fixed(a)?;
    // A pure argument reduces the fidelity to an overlap, which avoids the
    // precision loss of square roots near rank deficiency.
    for (p, q) in [(a, b), (b, a)] {
        if (p.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12 {
            psd_sqrt_fixed(q)?;
            return Ok((p * q).trace().re.clamp(0.0, 1.0));
        }
    }
    let inner = hermitize(&(sa * b * sa));
    let (values, _) = eigh(&to_dynamic(&inner));
    if values[0] < -REJECT_TOL {
        return Err(Error::state("fidelity argument is not PSD"));
    }
    let tr: f64 = values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// Pure polarization state `c_R|R⟩ + c_L|L⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationKet {
    c_r: C64,
    c_l: C64,
}

impl PolarizationKet {
    pub fn new(c_r: C64, c_l: C64) -> Result<Self> {
        let norm = c_r.norm_sqr() + c_l.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::state(format!(
                "ket is not normalized (|c|² = {norm})"
            )));
        }
        Ok(Self { c_r, c_l })
    }

    /// Normalizes the amplitude pair; fails on the zero vector.
    pub fn normalized(c_r: C64, c_l: C64) -> Result<Self> {
        let norm = (c_r.norm_sqr() + c_l.norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::state("cannot normalize a zero or non-finite ket"));
        }
        Self::new(c_r / norm, c_l / norm)
    }

    pub fn c_r(&self) -> C64 {
        self.c_r
    }

    pub fn c_l(&self) -> C64 {
        self.c_l
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PolarizationKet) -> C64 {
        self.c_r.conj() * other.c_r + self.c_l.conj() * other.c_l
    }

    pub fn density(&self) -> DensityMatrix {
        density_of(self)
    }
}

/// The six polarization states of the three analysis bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NamedState {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl NamedState {
    pub const ALL: [NamedState; 6] = [
        NamedState::H,
        NamedState::V,
        NamedState::D,
        NamedState::A,
        NamedState::R,
        NamedState::L,
    ];

    /// Fixed-phase ket for this label.
    ///
    /// `|H⟩ = (1, 1)/√2`, `|V⟩ = −i(1, −1)/√2`, `|D⟩ = (|H⟩ + |V⟩)/√2`,
    /// `|A⟩ = (|H⟩ − |V⟩)/√2`.
    pub fn ket(self) -> PolarizationKet {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = (C64::new(s, 0.0), C64::new(s, 0.0));
        let v = (-I * s, I * s);
        let (c_r, c_l) = match self {
            NamedState::R => (ONE, ZERO),
            NamedState::L => (ZERO, ONE),
            NamedState::H => h,
            NamedState::V => v,
            NamedState::D => ((h.0 + v.0) * s, (h.1 + v.1) * s),
            NamedState::A => ((h.0 - v.0) * s, (h.1 - v.1) * s),
        };
        PolarizationKet { c_r, c_l }
    }

    /// The orthogonal partner within the same basis.
    pub fn partner(self) -> NamedState {
        match self {
            NamedState::H => NamedState::V,
            NamedState::V => NamedState::H,
            NamedState::D => NamedState::A,
            NamedState::A => NamedState::D,
            NamedState::R => NamedState::L,
            NamedState::L => NamedState::R,
        }
    }
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for NamedState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" => Ok(NamedState::H),
            "V" => Ok(NamedState::V),
            "D" => Ok(NamedState::D),
            "A" => Ok(NamedState::A),
            "R" => Ok(NamedState::R),
            "L" => Ok(NamedState::L),
            other => Err(Error::param(format!(
                "unknown polarization label {other:?}"
            ))),
        }
    }
}

pub fn ket_from_named(label: NamedState) -> PolarizationKet {
    label.ket()
}

/// Physical single-qubit state in the R/L basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: Mat2) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::state("density matrix has non-finite entries"));
        }
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(Error::state(format!(
                "density matrix is not Hermitian ({defect:e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::state(format!("density matrix trace is {tr}")));
        }
        let min = eigenvalues(&m)[0];
        if min < -CLAMP_TOL {
            return Err(Error::state(format!(
                "density matrix has eigenvalue {min:e}"
            )));
        }
        Ok(Self(m))
    }

    /// Skips validation; for results of operations that preserve physicality.
    pub(crate) fn from_trusted(m: Mat2) -> Self {
        Self(hermitize(&m))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat2::identity().scale(0.5))
    }

    pub fn named(label: NamedState) -> Self {
        label.ket().density()
    }

    /// `ρ = (I + Σ S_i σ_i) / 2`; requires `‖S‖ ≤ 1 + 1e-10`.
    pub fn from_stokes(s: [f64; 3]) -> Result<Self> {
        let len = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !len.is_finite() || len > 1.0 + CLAMP_TOL {
            return Err(Error::state(format!(
                "Stokes vector length {len} exceeds 1"
            )));
        }
        Ok(Self(stokes_matrix(s)))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// `Tr(ρ Π)` for a projector `Π`.
    pub fn expectation(&self, op: &Mat2) -> f64 {
        (self.0 * op).trace().re
    }

    pub fn probability(&self, label: NamedState) -> f64 {
        let k = label.ket();
        let v = nalgebra::Vector2::new(k.c_r, k.c_l);
        (v.adjoint() * self.0 * v)[(0, 0)].re
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let v = eigenvalues(&self.0);
        [v[0], v[1]]
    }

    /// Convex mixture `p·self + (1 − p)·other`.
    pub fn mix(&self, other: &DensityMatrix, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(format!("mixing weight {p} outside [0, 1]")));
        }
        Ok(Self::from_trusted(self.0.scale(p) + other.0.scale(1.0 - p)))
    }

    /// Largest entry-wise deviation from `other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

fn stokes_matrix(s: [f64; 3]) -> Mat2 {
    let p = pauli_basis();
    (p[0] + p[1].scale(s[0]) + p[2].scale(s[1]) + p[3].scale(s[2])).scale(0.5)
}

/// Linear (possibly unphysical) inversion of Stokes parameters.
pub(crate) fn stokes_matrix_unchecked(s: [f64; 3]) -> Mat2 {
    stokes_matrix(s)
}

/// `|ψ⟩⟨ψ|`.
pub fn density_of(ket: &PolarizationKet) -> DensityMatrix {
    let v = nalgebra::Vector2::new(ket.c_r, ket.c_l);
    DensityMatrix::from_trusted(v * v.adjoint())
}

/// Uhlmann fidelity between two physical states.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    uhlmann(&rho.0, &sigma.0)
}

/// `S_i = Tr(ρ σ_i)` for `i = 1, 2, 3`.
pub fn stokes_of(rho: &DensityMatrix) -> [f64; 3] {
    let p = pauli_basis();
    [
        rho.expectation(&p[1]),
        rho.expectation(&p[2]),
        rho.expectation(&p[3]),
    ]
}

/// Single-qubit process matrix `χ` in the Pauli basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix(Mat4);

impl ProcessMatrix {
    /// Accepts any matrix that is Hermitian within 1e-10.
    pub fn new(m: Mat4) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::state("process matrix has non-finite entries"));
        }
        let defect = hermitian_defect(&m);
        if defect > 1e-10 {
            return Err(Error::state(format!(
                "process matrix is not Hermitian ({defect:e})"
            )));
        }
        Ok(Self(hermitize(&m)))
    }

    /// The identity channel: a single unit entry at (0, 0).
    pub fn identity_process() -> Self {
        let mut m = Mat4::zeros();
        m[(0, 0)] = ONE;
        Self(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn entry(&self, m: usize, n: usize) -> C64 {
        self.0[(m, n)]
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let v = eigenvalues(&self.0);
        [v[0], v[1], v[2], v[3]]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `Σ_mn χ_mn σ_m ρ σ_n†` applied to an arbitrary 2×2 operator.
    pub fn apply_operator(&self, rho: &Mat2) -> Mat2 {
        let p = pauli_basis();
        let mut out = Mat2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                let c = self.0[(m, n)];
                if c != ZERO {
                    out += (p[m] * rho * p[n].adjoint()) * c;
                }
            }
        }
        out
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Mat2 {
        self.apply_operator(&rho.0)
    }

    /// `Σ_mn χ_mn σ_n†σ_m`, the identity for trace-preserving maps.
    pub fn trace_condition(&self) -> Mat2 {
        let p = pauli_basis();
        let mut out = Mat2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                out += (p[n].adjoint() * p[m]) * self.0[(m, n)];
            }
        }
        out
    }
}

/// Uhlmann fidelity between two process matrices.
pub fn process_matrix_fidelity(chi: &ProcessMatrix, ideal: &ProcessMatrix) -> Result<f64> {
    uhlmann(&chi.0, &ideal.0)
}
