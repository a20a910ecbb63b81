//! Storage and directional retrieval.
//!
//! The stored qubit is held as two spin-wave modes whose relative phase
//! dephases over time; retrieval along a read beam at angle θ emits into the
//! phase-matched direction θ′ with an efficiency that falls with walk-off and
//! with storage time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{pauli, DensityMatrix};

/// Largest read-beam angle for which the efficiency model is defined.
pub const MAX_THETA_DEG: f64 = 5.0;

/// Physical memory parameters. Times are in ms, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Retrieval efficiency on axis at zero storage time.
    pub r0_axis: f64,
    /// Zero-time efficiency of the lifetime-series channel.
    pub r0_ch2: f64,
    /// Read angle at which `r0_ch2` applies.
    pub r0_ch2_theta: f64,
    /// Storage lifetime.
    pub tau: f64,
    /// e⁻¹ dephasing time of the stored coherence.
    pub sigma_gamma: f64,
    /// Gaussian walk-off angle scale.
    pub theta_w: f64,
    /// Digitized `(theta, R0)` points; replaces the Gaussian profile when non-empty.
    pub walkoff_table: Vec<[f64; 2]>,
    /// Residual coherence factor per channel id; missing ids default to 1.
    pub static_gamma: BTreeMap<String, f64>,
    /// Bias field in gauss (metadata).
    pub b0: f64,
    /// Field gradient in mG/cm (metadata).
    pub gradient: f64,
    /// Field fluctuation in mG (metadata).
    pub sigma_b: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            r0_axis: 0.14,
            r0_ch2: 0.127,
            r0_ch2_theta: 0.8,
            tau: 2.9,
            sigma_gamma: 104.0,
            theta_w: 6.684,
            walkoff_table: Vec::new(),
            static_gamma: BTreeMap::new(),
            b0: 12.5,
            gradient: 5.0,
            sigma_b: 0.4,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0_axis > 0.0 && self.r0_axis <= 1.0) {
            return Err(config_err("memory.r0_axis must be in (0, 1]"));
        }
        if !(self.r0_ch2 > 0.0 && self.r0_ch2 <= 1.0) {
            return Err(config_err("memory.r0_ch2 must be in (0, 1]"));
        }
        if !(0.0..=MAX_THETA_DEG).contains(&self.r0_ch2_theta) {
            return Err(config_err("memory.r0_ch2_theta must be in [0, 5]"));
        }
        if !(self.tau > 0.0) {
            return Err(config_err("memory.tau must be > 0"));
        }
        if !(self.sigma_gamma > 0.0) {
            return Err(config_err("memory.sigma_gamma must be > 0"));
        }
        if !(self.theta_w > 0.0) {
            return Err(config_err("memory.theta_w must be > 0"));
        }
        let mut last = f64::NEG_INFINITY;
        for (i, [theta, r0]) in self.walkoff_table.iter().enumerate() {
            if !(*theta > last && *theta >= 0.0 && theta.is_finite()) {
                return Err(config_err(format!(
                    "memory.walkoff_table[{i}]: angles must be finite, non-negative and strictly increasing"
                )));
            }
            if !(*r0 > 0.0 && *r0 <= 1.0) {
                return Err(config_err(format!(
                    "memory.walkoff_table[{i}]: efficiency must be in (0, 1]"
                )));
            }
            last = *theta;
        }
        for (id, g) in &self.static_gamma {
            if !(0.0..=1.0).contains(g) {
                return Err(config_err(format!(
                    "memory.static_gamma.{id} must be in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn static_gamma_for(&self, channel_id: &str) -> f64 {
        self.static_gamma.get(channel_id).copied().unwrap_or(1.0)
    }
}

/// One routed output port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub id: String,
    /// Read-beam angle relative to the quantization axis, degrees.
    pub theta: f64,
}

impl ChannelSpec {
    pub fn new(id: impl Into<String>, theta: f64) -> Self {
        Self {
            id: id.into(),
            theta,
        }
    }
}

/// The seven output channels S0..S6.
pub fn default_channels() -> Vec<ChannelSpec> {
    [0.0, 0.4, 0.8, 2.0, 3.0, 4.0, 5.0]
        .iter()
        .enumerate()
        .map(|(i, &theta)| ChannelSpec::new(format!("S{i}"), theta))
        .collect()
}

pub fn validate_channels(channels: &[ChannelSpec]) -> Result<()> {
    if channels.is_empty() {
        return Err(config_err("channels must not be empty"));
    }
    let mut last = f64::NEG_INFINITY;
    for (i, ch) in channels.iter().enumerate() {
        if ch.id.is_empty() {
            return Err(config_err(format!("channels[{i}].id must not be empty")));
        }
        if channels[..i].iter().any(|c| c.id == ch.id) {
            return Err(config_err(format!(
                "channels[{i}].id {:?} is duplicated",
                ch.id
            )));
        }
        if !(0.0..=MAX_THETA_DEG).contains(&ch.theta) {
            return Err(config_err(format!(
                "channels[{i}].theta must be in [0, 5] degrees"
            )));
        }
        if ch.theta <= last {
            return Err(config_err("channel angles must be strictly increasing"));
        }
        last = ch.theta;
    }
    Ok(())
}

/// Relative frequency offset `(ω_ae − ω_be)/ω_be` of the two transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseMatchConfig {
    pub delta: f64,
}

impl Default for PhaseMatchConfig {
    fn default() -> Self {
        Self { delta: 1.81e-5 }
    }
}

impl PhaseMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.abs() < 1e-3) {
            return Err(config_err("phase_match.delta must satisfy |delta| < 1e-3"));
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=MAX_THETA_DEG).contains(&theta) {
        return Err(Error::param(format!(
            "read angle {theta} deg outside [0, {MAX_THETA_DEG}]"
        )));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param(format!("storage time {t} ms must be >= 0")));
    }
    Ok(())
}

fn interpolate(table: &[[f64; 2]], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let k = table.partition_point(|p| p[0] <= x);
    let [x0, y0] = table[k - 1];
    let [x1, y1] = table[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Zero-time efficiency of the angle scan: the walk-off profile alone.
///
/// Gaussian overlap `r0_axis·exp(−θ²/θ_w²)`, or linear interpolation of
/// `walkoff_table` when one is configured.
pub fn walkoff_profile(theta: f64, cfg: &MemoryConfig) -> Result<f64> {
    check_theta(theta)?;
    if cfg.walkoff_table.is_empty() {
        Ok(cfg.r0_axis * (-(theta * theta) / (cfg.theta_w * cfg.theta_w)).exp())
    } else {
        Ok(interpolate(&cfg.walkoff_table, theta))
    }
}

/// Zero-time efficiency used for retrieval, honoring the `r0_ch2` anchor.
pub fn zero_time_efficiency(theta: f64, cfg: &MemoryConfig) -> Result<f64> {
    check_theta(theta)?;
    if (theta - cfg.r0_ch2_theta).abs() < 1e-9 {
        Ok(cfg.r0_ch2)
    } else {
        walkoff_profile(theta, cfg)
    }
}

/// `R(θ, t) = R₀(θ)·exp(−t/τ)`.
pub fn retrieval_efficiency(theta: f64, t: f64, cfg: &MemoryConfig) -> Result<f64> {
    check_time(t)?;
    Ok(zero_time_efficiency(theta, cfg)? * (-t / cfg.tau).exp())
}

/// `γ_eff(t) = γ₀·exp(−t²/σ_γ²)` for the given channel.
pub fn dephasing_factor(t: f64, channel: &ChannelSpec, cfg: &MemoryConfig) -> Result<f64> {
    check_time(t)?;
    let s = cfg.sigma_gamma;
    Ok(cfg.static_gamma_for(&channel.id) * (-(t * t) / (s * s)).exp())
}

/// Scales the R/L coherences by `gamma`.
///
/// Equivalent to `(1+γ)/2·ρ + (1−γ)/2·σ₃ρσ₃`.
pub fn dephase(rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param(format!(
            "coherence factor {gamma} outside [0, 1]"
        )));
    }
    let z = pauli(3);
    let m = rho.matrix();
    let out = m.scale((1.0 + gamma) / 2.0) + (z * m * z).scale((1.0 - gamma) / 2.0);
    Ok(DensityMatrix::from_trusted(out))
}

/// Phase-matched emission angle `θ′ = atan(sin θ / (δ + cos θ))`, degrees.
pub fn theta_prime(theta: f64, cfg: &PhaseMatchConfig) -> Result<f64> {
    check_theta(theta)?;
    if cfg.delta == 0.0 {
        return Ok(theta);
    }
    let rad = theta.to_radians();
    Ok((rad.sin() / (cfg.delta + rad.cos())).atan().to_degrees())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub channel_id: String,
    /// Dephased signal state before background is added.
    pub state: DensityMatrix,
    pub efficiency: f64,
    pub gamma: f64,
    /// Emission angle, degrees.
    pub theta_out: f64,
}

/// A configured memory with its routed output channels.
#[derive(Debug, Clone)]
pub struct QuantumMemory {
    config: MemoryConfig,
    channels: Vec<ChannelSpec>,
    phase_match: PhaseMatchConfig,
}

impl QuantumMemory {
    pub fn new(
        config: MemoryConfig,
        channels: Vec<ChannelSpec>,
        phase_match: PhaseMatchConfig,
    ) -> Result<Self> {
        config.validate()?;
        validate_channels(&channels)?;
        phase_match.validate()?;
        Ok(Self {
            config,
            channels,
            phase_match,
        })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn phase_match(&self) -> &PhaseMatchConfig {
        &self.phase_match
    }

    pub fn channel(&self, id: &str) -> Result<&ChannelSpec> {
        self.channels
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::param(format!("unknown channel id {id:?}")))
    }

    /// Reads the stored state out after `t` ms into channel `channel_id` only.
    pub fn release(
        &self,
        rho_in: &DensityMatrix,
        channel_id: &str,
        t: f64,
    ) -> Result<RetrievalOutcome> {
        let channel = self.channel(channel_id)?;
        let gamma = dephasing_factor(t, channel, &self.config)?;
        Ok(RetrievalOutcome {
            channel_id: channel.id.clone(),
            state: dephase(rho_in, gamma)?,
            efficiency: retrieval_efficiency(channel.theta, t, &self.config)?,
            gamma,
            theta_out: theta_prime(channel.theta, &self.phase_match)?,
        })
    }
}
