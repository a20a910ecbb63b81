//! State and process reconstruction from photon counts.
//!
//! States are estimated by linear Stokes inversion followed, when needed, by
//! projection onto the physical set (negative eigenvalues clamped to zero,
//! trace renormalized). The process matrix is obtained by solving
//! `ρ_out = Σ χ_mn σ_m ρ_in σ_n†` over four informationally complete inputs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::detection::{
    expected_counts, expected_rates, postselected_state, resample, sample_counts, BasisTally,
    CountRecord, DetectionConfig, MeasurementBasis,
};
use crate::error::{Error, Result};
use crate::memory::QuantumMemory;
use crate::polarization::{
    eigh, hermitize, pauli_basis, process_matrix_fidelity, stokes_matrix_unchecked, DensityMatrix,
    Mat2, Mat4, NamedState, ProcessMatrix, C64, REJECT_TOL,
};
use crate::rng::RngStream;

/// Input states prepared for process tomography.
pub const PROCESS_INPUTS: [NamedState; 4] =
    [NamedState::H, NamedState::V, NamedState::D, NamedState::R];

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub raw_stokes: [f64; 3],
    pub physical_projection_applied: bool,
    /// Largest entry-wise change made by the projection.
    pub projection_distance: f64,
}

/// Stokes vector from one count record per analysis basis.
pub fn stokes_from_counts<T: BasisTally>(records: &[T]) -> Result<[f64; 3]> {
    let mut s = [f64::NAN; 3];
    for rec in records {
        let axis = rec.basis().stokes_axis();
        if !s[axis].is_nan() {
            return Err(Error::param(format!(
                "basis {} appears twice",
                rec.basis().label()
            )));
        }
        let total = rec.plus() + rec.minus();
        if !(total > 0.0) {
            return Err(Error::param(format!(
                "no counts in basis {}",
                rec.basis().label()
            )));
        }
        s[axis] = (rec.plus() - rec.minus()) / total;
    }
    if let Some(missing) = MeasurementBasis::ALL
        .iter()
        .find(|b| s[b.stokes_axis()].is_nan())
    {
        return Err(Error::param(format!("missing basis {}", missing.label())));
    }
    Ok(s)
}

/// Linear state estimate with projection onto the physical states.
pub fn state_estimate(s: [f64; 3]) -> Result<TomographyResult> {
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::param(format!("non-finite Stokes estimate {s:?}")));
    }
    let linear = stokes_matrix_unchecked(s);
    let dyn_lin = DMatrix::from_iterator(2, 2, linear.iter().copied());
    let (values, vectors) = eigh(&dyn_lin);
    if values[0] >= 0.0 {
        return Ok(TomographyResult {
            rho: DensityMatrix::new(linear)?,
            raw_stokes: s,
            physical_projection_applied: false,
            projection_distance: 0.0,
        });
    }
    let clamped: Vec<f64> = values.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let mut m = Mat2::zeros();
    for (k, &lambda) in clamped.iter().enumerate() {
        let v = vectors.column(k);
        let v = nalgebra::Vector2::new(v[0], v[1]);
        m += (v * v.adjoint()).scale(lambda / total);
    }
    let distance = (m - linear).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(TomographyResult {
        rho: DensityMatrix::new(hermitize(&m))?,
        raw_stokes: s,
        physical_projection_applied: true,
        projection_distance: distance,
    })
}

/// Process matrix and whether PSD projection was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessReconstruction {
    pub chi: ProcessMatrix,
    /// Hermitized linear solution before any projection.
    pub raw_chi: ProcessMatrix,
    pub projection_applied: bool,
}

fn flatten(m: &Mat2) -> [C64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

/// Solves for χ from four `(input, output)` pairs.
pub fn reconstruct_process(
    pairs: &[(DensityMatrix, DensityMatrix)],
) -> Result<ProcessReconstruction> {
    if pairs.len() != 4 {
        return Err(Error::Degenerate(format!(
            "process tomography needs exactly 4 input states, got {}",
            pairs.len()
        )));
    }
    let inputs = DMatrix::from_fn(4, 4, |r, k| flatten(pairs[k].0.matrix())[r]);
    let det = inputs.clone().determinant().norm();
    if det < 1e-9 {
        return Err(Error::Degenerate(
            "input states are not linearly independent".into(),
        ));
    }

    let p = pauli_basis();
    let mut a = DMatrix::<C64>::zeros(16, 16);
    let mut b = DVector::<C64>::zeros(16);
    for (k, (rho_in, rho_out)) in pairs.iter().enumerate() {
        let out = flatten(rho_out.matrix());
        for e in 0..4 {
            b[4 * k + e] = out[e];
        }
        for m in 0..4 {
            for n in 0..4 {
                let term = flatten(&(p[m] * rho_in.matrix() * p[n].adjoint()));
                for e in 0..4 {
                    a[(4 * k + e, 4 * m + n)] = term[e];
                }
            }
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("process system is singular".into()))?;
    let solved = Mat4::from_fn(|m, n| x[4 * m + n]);
    let raw = ProcessMatrix::new(hermitize(&solved))?;

    let dyn_chi = DMatrix::from_iterator(4, 4, raw.matrix().iter().copied());
    let (values, vectors) = eigh(&dyn_chi);
    if values[0] >= -REJECT_TOL {
        return Ok(ProcessReconstruction {
            chi: raw,
            raw_chi: raw,
            projection_applied: false,
        });
    }
    let clamped: Vec<f64> = values.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "process matrix has no positive part".into(),
        ));
    }
    let mut m = Mat4::zeros();
    for (k, &lambda) in clamped.iter().enumerate() {
        let v = nalgebra::Vector4::from_iterator(vectors.column(k).iter().copied());
        m += (v * v.adjoint()).scale(lambda / total);
    }
    Ok(ProcessReconstruction {
        chi: ProcessMatrix::new(hermitize(&m))?,
        raw_chi: raw,
        projection_applied: true,
    })
}

pub fn process_matrix(pairs: &[(DensityMatrix, DensityMatrix)]) -> Result<ProcessMatrix> {
    reconstruct_process(pairs).map(|r| r.chi)
}

/// Uhlmann fidelity of `chi` against `chi_ideal`; both must be PSD with unit trace.
pub fn process_fidelity(chi: &ProcessMatrix, chi_ideal: &ProcessMatrix) -> Result<f64> {
    for (name, m) in [("chi", chi), ("chi_ideal", chi_ideal)] {
        if (m.trace() - 1.0).abs() > 1e-6 {
            return Err(Error::state(format!(
                "{name} trace is {}, expected 1",
                m.trace()
            )));
        }
        if m.eigenvalues()[0] < -REJECT_TOL {
            return Err(Error::state(format!("{name} is not positive semidefinite")));
        }
    }
    process_matrix_fidelity(chi, chi_ideal)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessResult {
    #[serde(skip)]
    pub chi: ProcessMatrix,
    pub process_fidelity: f64,
    /// `Re χ₀₀` of the unprojected solution.
    pub raw_fidelity: f64,
    pub chi_projection_applied: bool,
    /// Number of output states that needed physicality projection.
    pub state_projections: usize,
    pub input_labels: Vec<NamedState>,
}

/// Counting statistics for a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    /// Mean counts (infinite-statistics limit).
    Expected,
    /// Poisson-sampled counts drawn from the given stream.
    Poisson(RngStream),
}

/// Counts recorded for one prepared input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCounts<T> {
    pub input: NamedState,
    pub records: [T; 3],
}

/// Full reconstruction from per-input count records.
pub fn reconstruct_from_counts<T: BasisTally>(
    observations: &[InputCounts<T>],
) -> Result<ProcessResult> {
    let mut pairs = Vec::with_capacity(observations.len());
    let mut state_projections = 0;
    for obs in observations {
        let est = state_estimate(stokes_from_counts(&obs.records)?)?;
        if est.physical_projection_applied {
            state_projections += 1;
        }
        pairs.push((DensityMatrix::named(obs.input), est.rho));
    }
    let rec = reconstruct_process(&pairs)?;
    let fidelity = process_fidelity(&rec.chi, &ProcessMatrix::identity_process())?;
    Ok(ProcessResult {
        chi: rec.chi,
        process_fidelity: fidelity,
        raw_fidelity: rec.raw_chi.entry(0, 0).re,
        chi_projection_applied: rec.projection_applied,
        state_projections,
        input_labels: observations.iter().map(|o| o.input).collect(),
    })
}

/// Outcome of a simulated process-tomography run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessRun {
    pub result: ProcessResult,
    pub efficiency: f64,
    pub gamma: f64,
    /// Sampled counts; `None` in expected-count mode.
    pub counts: Option<Vec<InputCounts<CountRecord>>>,
}

/// Simulates storage, retrieval and three-basis analysis for the four
/// inputs, then reconstructs χ and its fidelity to the identity.
pub fn run_process_tomography(
    memory: &QuantumMemory,
    detection: &DetectionConfig,
    inputs: &[NamedState],
    channel_id: &str,
    t: f64,
    pulses: u64,
    statistics: Statistics,
) -> Result<ProcessRun> {
    let mut outcomes = Vec::with_capacity(inputs.len());
    for &input in inputs {
        let out = memory.release(&DensityMatrix::named(input), channel_id, t)?;
        let rates: Vec<(f64, f64)> = MeasurementBasis::ALL
            .iter()
            .map(|&b| expected_rates(&out.state, out.efficiency, b, detection))
            .collect::<Result<_>>()?;
        outcomes.push((input, out, rates));
    }
    let (efficiency, gamma) = outcomes
        .first()
        .map(|o| (o.1.efficiency, o.1.gamma))
        .ok_or_else(|| Error::Degenerate("no input states".into()))?;

    match statistics {
        Statistics::Expected => {
            let obs = outcomes
                .iter()
                .map(|(input, _, rates)| {
                    let rec =
                        |i: usize| expected_counts(MeasurementBasis::ALL[i], rates[i], pulses);
                    Ok(InputCounts {
                        input: *input,
                        records: [rec(0)?, rec(1)?, rec(2)?],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ProcessRun {
                result: reconstruct_from_counts(&obs)?,
                efficiency,
                gamma,
                counts: None,
            })
        }
        Statistics::Poisson(stream) => {
            let obs = outcomes
                .iter()
                .enumerate()
                .map(|(k, (input, _, rates))| {
                    let input_stream = stream.child(k as u64);
                    let rec = |i: usize| {
                        let mut rng = input_stream.child(i as u64).rng();
                        sample_counts(MeasurementBasis::ALL[i], rates[i], pulses, &mut rng)
                    };
                    Ok(InputCounts {
                        input: *input,
                        records: [rec(0)?, rec(1)?, rec(2)?],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ProcessRun {
                result: reconstruct_from_counts(&obs)?,
                efficiency,
                gamma,
                counts: Some(obs),
            })
        }
    }
}

/// Sample mean and unbiased standard deviation, accumulated in slice order.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Standard deviation of the process fidelity under Poisson resampling of
/// every observed count.
pub fn monte_carlo_error(
    observed: &[InputCounts<CountRecord>],
    resamples: usize,
    stream: RngStream,
) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::param(format!(
            "at least 2 resamples are required, got {resamples}"
        )));
    }
    let fidelities = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let redrawn = observed
                .iter()
                .map(|obs| {
                    Ok(InputCounts {
                        input: obs.input,
                        records: [
                            resample(&obs.records[0], &mut rng)?,
                            resample(&obs.records[1], &mut rng)?,
                            resample(&obs.records[2], &mut rng)?,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            reconstruct_from_counts(&redrawn).map(|r| r.process_fidelity)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_std(&fidelities).1)
}

/// Post-selected output states with no counting noise, for checks against
/// the count pipeline.
pub fn ideal_output(
    memory: &QuantumMemory,
    detection: &DetectionConfig,
    input: NamedState,
    channel_id: &str,
    t: f64,
) -> Result<DensityMatrix> {
    let out = memory.release(&DensityMatrix::named(input), channel_id, t)?;
    postselected_state(&out.state, out.efficiency, detection)
}
