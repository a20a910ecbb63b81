//! Detection chain, photon-count statistics and post-selection.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{DensityMatrix, NamedState};

/// Largest pulse budget accepted per measurement setting.
pub const MAX_PULSES: u64 = 1_000_000_000;

/// Which value of the total detection efficiency the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaSource {
    /// The separately measured total efficiency `eta_measured`.
    Measured,
    /// The product of the four chain efficiencies.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Single-mode fiber coupling.
    pub eta_fiber: f64,
    /// Combined transmission of the filter etalons.
    pub eta_etalons: f64,
    /// Multi-mode fiber coupling to the detectors.
    pub eta_mmf: f64,
    /// Detector quantum efficiency.
    pub eta_spd: f64,
    /// Measured total detection efficiency.
    pub eta_measured: f64,
    pub eta_source: EtaSource,
    /// Mean input photon number per pulse.
    pub n_bar: f64,
    /// Background counts per pulse per detector.
    pub background_n: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            eta_fiber: 0.80,
            eta_etalons: 0.58,
            eta_mmf: 0.97,
            eta_spd: 0.50,
            eta_measured: 0.23,
            eta_source: EtaSource::Measured,
            n_bar: 1.0,
            background_n: 7e-4,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("eta_fiber", self.eta_fiber),
            ("eta_etalons", self.eta_etalons),
            ("eta_mmf", self.eta_mmf),
            ("eta_spd", self.eta_spd),
            ("eta_measured", self.eta_measured),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("detection.{name} must be in (0, 1]")));
            }
        }
        if !(self.n_bar > 0.0 && self.n_bar.is_finite()) {
            return Err(Error::Config("detection.n_bar must be > 0".into()));
        }
        if !(self.background_n >= 0.0 && self.background_n.is_finite()) {
            return Err(Error::Config("detection.background_n must be >= 0".into()));
        }
        Ok(())
    }

    /// The efficiency `η_d` entering the count model.
    pub fn eta_d(&self) -> f64 {
        match self.eta_source {
            EtaSource::Measured => self.eta_measured,
            EtaSource::Chain => total_detection_efficiency(self),
        }
    }

    /// Mean detected signal photons per pulse for retrieval efficiency `r`.
    pub fn signal_rate(&self, efficiency: f64) -> f64 {
        self.n_bar * self.eta_d() * efficiency
    }
}

/// Product of the four chain efficiencies.
pub fn total_detection_efficiency(cfg: &DetectionConfig) -> f64 {
    cfg.eta_fiber * cfg.eta_etalons * cfg.eta_mmf * cfg.eta_spd
}

/// One of the three mutually unbiased analysis bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementBasis {
    HV,
    DA,
    RL,
}

impl MeasurementBasis {
    pub const ALL: [MeasurementBasis; 3] = [
        MeasurementBasis::HV,
        MeasurementBasis::DA,
        MeasurementBasis::RL,
    ];

    /// The `(+, −)` outcome states.
    pub fn states(self) -> (NamedState, NamedState) {
        match self {
            MeasurementBasis::HV => (NamedState::H, NamedState::V),
            MeasurementBasis::DA => (NamedState::D, NamedState::A),
            MeasurementBasis::RL => (NamedState::R, NamedState::L),
        }
    }

    /// Index of the Stokes component this basis measures.
    pub fn stokes_axis(self) -> usize {
        match self {
            MeasurementBasis::HV => 0,
            MeasurementBasis::DA => 1,
            MeasurementBasis::RL => 2,
        }
    }

    pub fn projectors(self) -> (crate::polarization::Mat2, crate::polarization::Mat2) {
        let (p, m) = self.states();
        (
            *DensityMatrix::named(p).matrix(),
            *DensityMatrix::named(m).matrix(),
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            MeasurementBasis::HV => "HV",
            MeasurementBasis::DA => "DA",
            MeasurementBasis::RL => "RL",
        }
    }
}

/// Outcome totals for one basis setting, either sampled or expected.
pub trait BasisTally {
    fn basis(&self) -> MeasurementBasis;
    fn plus(&self) -> f64;
    fn minus(&self) -> f64;
}

/// Sampled photon counts over `pulses` repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub basis: MeasurementBasis,
    pub n_plus: u64,
    pub n_minus: u64,
    pub pulses: u64,
}

impl BasisTally for CountRecord {
    fn basis(&self) -> MeasurementBasis {
        self.basis
    }
    fn plus(&self) -> f64 {
        self.n_plus as f64
    }
    fn minus(&self) -> f64 {
        self.n_minus as f64
    }
}

/// Infinite-statistics counterpart of [`CountRecord`]: mean counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRecord {
    pub basis: MeasurementBasis,
    pub mean_plus: f64,
    pub mean_minus: f64,
    pub pulses: u64,
}

impl BasisTally for ExpectedRecord {
    fn basis(&self) -> MeasurementBasis {
        self.basis
    }
    fn plus(&self) -> f64 {
        self.mean_plus
    }
    fn minus(&self) -> f64 {
        self.mean_minus
    }
}

fn check_efficiency(efficiency: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::param(format!(
            "efficiency {efficiency} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Per-pulse mean detector counts `μ± = n̄·η_d·R·Tr(Π± ρ) + N`.
pub fn expected_rates(
    state: &DensityMatrix,
    efficiency: f64,
    basis: MeasurementBasis,
    cfg: &DetectionConfig,
) -> Result<(f64, f64)> {
    check_efficiency(efficiency)?;
    let signal = cfg.signal_rate(efficiency);
    let (plus, minus) = basis.states();
    // Clamp rounding dust so the rates stay valid Poisson means.
    let p_plus = state.probability(plus).clamp(0.0, 1.0);
    let p_minus = state.probability(minus).clamp(0.0, 1.0);
    Ok((
        signal * p_plus + cfg.background_n,
        signal * p_minus + cfg.background_n,
    ))
}

fn poisson(mean: f64, rng: &mut impl Rng) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::param(format!("invalid Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

fn check_rates(rates: (f64, f64)) -> Result<()> {
    if !(rates.0 >= 0.0 && rates.1 >= 0.0 && rates.0.is_finite() && rates.1.is_finite()) {
        return Err(Error::param(format!(
            "rates {rates:?} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// Draws `n± ~ Poisson(M·μ±)` independently.
pub fn sample_counts(
    basis: MeasurementBasis,
    rates: (f64, f64),
    pulses: u64,
    rng: &mut impl Rng,
) -> Result<CountRecord> {
    check_pulses(pulses)?;
    check_rates(rates)?;
    let m = pulses as f64;
    Ok(CountRecord {
        basis,
        n_plus: poisson(m * rates.0, rng)?,
        n_minus: poisson(m * rates.1, rng)?,
        pulses,
    })
}

/// Mean counts `M·μ±` without sampling.
pub fn expected_counts(
    basis: MeasurementBasis,
    rates: (f64, f64),
    pulses: u64,
) -> Result<ExpectedRecord> {
    check_pulses(pulses)?;
    check_rates(rates)?;
    let m = pulses as f64;
    Ok(ExpectedRecord {
        basis,
        mean_plus: m * rates.0,
        mean_minus: m * rates.1,
        pulses,
    })
}

pub(crate) fn check_pulses(pulses: u64) -> Result<()> {
    if pulses == 0 || pulses > MAX_PULSES {
        return Err(Error::param(format!(
            "pulse count {pulses} outside [1, {MAX_PULSES}]"
        )));
    }
    Ok(())
}

/// Redraws a count as `Poisson(observed)`.
pub(crate) fn resample(record: &CountRecord, rng: &mut impl Rng) -> Result<CountRecord> {
    Ok(CountRecord {
        basis: record.basis,
        n_plus: poisson(record.n_plus as f64, rng)?,
        n_minus: poisson(record.n_minus as f64, rng)?,
        pulses: record.pulses,
    })
}

/// State seen on detected photons only: `p·ρ + (1 − p)·I/2`.
pub fn postselected_state(
    state_deph: &DensityMatrix,
    efficiency: f64,
    cfg: &DetectionConfig,
) -> Result<DensityMatrix> {
    check_efficiency(efficiency)?;
    let signal = cfg.signal_rate(efficiency);
    let total = signal + 2.0 * cfg.background_n;
    if total <= 0.0 {
        return Err(Error::param(
            "post-selection undefined: no signal and no background",
        ));
    }
    state_deph.mix(&DensityMatrix::maximally_mixed(), signal / total)
}
