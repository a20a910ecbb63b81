#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use polmem::polarization::{pauli_basis, DensityMatrix, Mat2, Mat4, C64};
use rand::Rng;
use rand_distr::StandardNormal;

/// Random qubit channel from a Haar-like isometry `C² → C⁴`, as two Kraus
/// operators plus the exact χ they define.
pub struct RandomChannel {
    pub kraus: [Mat2; 2],
    pub chi: Mat4,
}

pub fn random_channel(rng: &mut impl Rng) -> RandomChannel {
    let g = DMatrix::<C64>::from_fn(4, 2, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let q = g.qr().q();
    let kraus = [0, 2].map(|r| Matrix2::from_fn(|i, j| q[(r + i, j)]));
    let paulis = pauli_basis();
    let mut chi = Mat4::zeros();
    for k in &kraus {
        let a: Vec<C64> = paulis.iter().map(|s| (s * k).trace() / 2.0).collect();
        for m in 0..4 {
            for n in 0..4 {
                chi[(m, n)] += a[m] * a[n].conj();
            }
        }
    }
    RandomChannel { kraus, chi }
}

impl RandomChannel {
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let m: Mat2 = self
            .kraus
            .iter()
            .map(|k| k * rho.matrix() * k.adjoint())
            .sum();
        let m = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        DensityMatrix::new(m).expect("channel output is a state")
    }
}

/// Uniform point in the closed unit ball, scaled by `radius`.
pub fn random_stokes(rng: &mut impl Rng, radius: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v.map(|x| x * radius);
        }
    }
}
