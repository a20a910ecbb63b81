//! Reproduction scenarios: angle scan, lifetime series, fidelity versus
//! storage time, and the per-channel fidelity table.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::artifact::{Cell, NamedFit, RunArtifact, Table};
use super::config::{ScenarioConfig, TABLE1_TARGETS};
use crate::error::{Error, Result};
use crate::fitting::{
    calibrate_static_gamma, fit_exponential, fit_sigma_gamma, DecayDataset, DecayPoint,
    FidelityModel, FitReport,
};
use crate::memory::{walkoff_profile, zero_time_efficiency, QuantumMemory};
use crate::polarization::{DensityMatrix, NamedState};
use crate::rng::RngStream;
use crate::tomography::{monte_carlo_error, run_process_tomography, Statistics};

/// Stream namespaces under the run seed.
const NS_TOMOGRAPHY: u64 = 0;
const NS_LIFETIME: u64 = 1;

pub fn build_memory(cfg: &ScenarioConfig) -> Result<QuantumMemory> {
    QuantumMemory::new(cfg.memory.clone(), cfg.channels.clone(), cfg.phase_match)
}

fn channel_index(cfg: &ScenarioConfig, id: &str) -> Result<usize> {
    cfg.channels
        .iter()
        .position(|c| c.id == id)
        .ok_or_else(|| Error::Config(format!("unknown channel {id:?}")))
}

/// Stream for the tomography unit `(channel, time)`.
fn tomography_stream(cfg: &ScenarioConfig, channel: usize, time: usize) -> RngStream {
    RngStream::new(cfg.seed)
        .child(NS_TOMOGRAPHY)
        .child(channel as u64)
        .child(time as u64)
}

/// Closed-form model for one channel with the configured parameters.
pub fn channel_model(cfg: &ScenarioConfig, channel_id: &str) -> Result<FidelityModel> {
    let ch = &cfg.channels[channel_index(cfg, channel_id)?];
    Ok(FidelityModel::new(
        zero_time_efficiency(ch.theta, &cfg.memory)?,
        cfg.memory.tau,
        cfg.memory.sigma_gamma,
        cfg.memory.static_gamma_for(&ch.id),
        &cfg.detection,
    ))
}

/// Process-tomography result at one `(channel, storage time)` unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityPoint {
    pub channel_id: String,
    pub theta: f64,
    pub t: f64,
    pub efficiency: f64,
    pub gamma: f64,
    pub fidelity: f64,
    /// Monte Carlo standard deviation; zero with expected counts.
    pub error: f64,
    pub raw_fidelity: f64,
    pub closed_form: f64,
    pub state_projections: usize,
    pub chi_projection: bool,
}

pub fn fidelity_point(
    cfg: &ScenarioConfig,
    memory: &QuantumMemory,
    channel: usize,
    time_index: usize,
    t: f64,
) -> Result<FidelityPoint> {
    let ch = &cfg.channels[channel];
    let stream = tomography_stream(cfg, channel, time_index);
    let statistics = if cfg.expected_counts {
        Statistics::Expected
    } else {
        Statistics::Poisson(stream.child(0))
    };
    let run = run_process_tomography(
        memory,
        &cfg.detection,
        &cfg.input_states,
        &ch.id,
        t,
        cfg.pulses_per_setting,
        statistics,
    )?;
    let error = match &run.counts {
        Some(counts) => monte_carlo_error(counts, cfg.mc_resamples, stream.child(1))?,
        None => 0.0,
    };
    Ok(FidelityPoint {
        channel_id: ch.id.clone(),
        theta: ch.theta,
        t,
        efficiency: run.efficiency,
        gamma: run.gamma,
        fidelity: run.result.process_fidelity,
        error,
        raw_fidelity: run.result.raw_fidelity,
        closed_form: channel_model(cfg, &ch.id)?.fidelity(t),
        state_projections: run.result.state_projections,
        chi_projection: run.result.chi_projection_applied,
    })
}

const FIDELITY_COLUMNS: [&str; 12] = [
    "channel",
    "theta_deg",
    "t_ms",
    "efficiency",
    "gamma",
    "fidelity",
    "fidelity_error",
    "raw_fidelity",
    "closed_form",
    "state_projections",
    "chi_projection",
    "static_gamma",
];

fn fidelity_row(cfg: &ScenarioConfig, p: &FidelityPoint) -> Vec<Cell> {
    vec![
        p.channel_id.as_str().into(),
        p.theta.into(),
        p.t.into(),
        p.efficiency.into(),
        p.gamma.into(),
        p.fidelity.into(),
        p.error.into(),
        p.raw_fidelity.into(),
        p.closed_form.into(),
        p.state_projections.into(),
        p.chi_projection.into(),
        cfg.memory.static_gamma_for(&p.channel_id).into(),
    ]
}

fn record_fit(artifact: &mut RunArtifact, name: &str, fit: Result<FitReport>) {
    let (report, error) = match fit {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    artifact.fits.push(NamedFit {
        name: name.into(),
        report,
        error,
    });
}

/// Retrieval efficiency versus read angle at the readout time, both circular
/// inputs.
pub fn run_fig3(cfg: &ScenarioConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let mut art = RunArtifact::new("fig3", cfg);
    let mut table = Table::new(
        "efficiency",
        &[
            "channel",
            "theta_deg",
            "efficiency_sigma_plus",
            "efficiency_sigma_minus",
        ],
    );
    let decay = (-cfg.readout_time / cfg.memory.tau).exp();
    for ch in &cfg.channels {
        // Retrieval efficiency does not depend on the stored polarization.
        let r = walkoff_profile(ch.theta, &cfg.memory)? * decay;
        table.push(vec![
            ch.id.as_str().into(),
            ch.theta.into(),
            r.into(),
            r.into(),
        ]);
    }
    art.tables.push(table);
    Ok(art)
}

/// Detected-count estimate of a retrieval efficiency with its standard error.
fn measured_efficiency(
    cfg: &ScenarioConfig,
    efficiency: f64,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let det = &cfg.detection;
    let m = cfg.pulses_per_setting as f64;
    let mean = m * (det.signal_rate(efficiency) + 2.0 * det.background_n);
    let n = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::param(format!("invalid Poisson mean {mean}: {e}")))?
            .sample(rng)
    } else {
        0.0
    };
    let per_photon = det.n_bar * det.eta_d();
    let estimate = (n / m - 2.0 * det.background_n) / per_photon;
    Ok((estimate, n.max(1.0).sqrt() / m / per_photon))
}

/// Retrieval efficiency versus storage time on the lifetime channel, with an
/// exponential fit.
pub fn run_fig4(cfg: &ScenarioConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let memory = build_memory(cfg)?;
    let channel = channel_index(cfg, &cfg.lifetime_channel)?;
    let ch = &cfg.channels[channel];
    let mut art = RunArtifact::new("fig4", cfg);
    let mut table = Table::new(
        "efficiency",
        &[
            "t_ms",
            "efficiency_sigma_plus",
            "efficiency_sigma_minus",
            "efficiency_mean",
            "efficiency_error",
            "model",
        ],
    );
    let mut points = Vec::with_capacity(cfg.fig4.storage_times.len());
    for (k, &t) in cfg.fig4.storage_times.iter().enumerate() {
        let mut values = [0.0; 2];
        let mut errors = [0.0; 2];
        for (j, input) in [NamedState::R, NamedState::L].into_iter().enumerate() {
            let out = memory.release(&DensityMatrix::named(input), &ch.id, t)?;
            if cfg.fig4.count_noise {
                let mut rng = RngStream::new(cfg.seed)
                    .child(NS_LIFETIME)
                    .child(k as u64)
                    .child(j as u64)
                    .rng();
                (values[j], errors[j]) = measured_efficiency(cfg, out.efficiency, &mut rng)?;
            } else {
                values[j] = out.efficiency;
            }
        }
        let mean = 0.5 * (values[0] + values[1]);
        let err = 0.5 * (errors[0] * errors[0] + errors[1] * errors[1]).sqrt();
        let model = zero_time_efficiency(ch.theta, &cfg.memory)? * (-t / cfg.memory.tau).exp();
        table.push(vec![
            t.into(),
            values[0].into(),
            values[1].into(),
            mean.into(),
            err.into(),
            model.into(),
        ]);
        points.push(if cfg.fig4.count_noise {
            DecayPoint::with_sigma(t, mean, err)
        } else {
            DecayPoint::new(t, mean)
        });
    }
    art.tables.push(table);
    let fit = DecayDataset::new(points)
        .map_err(|e| Error::Fit(e.to_string()))
        .and_then(|d| fit_exponential(&d));
    record_fit(&mut art, "exponential", fit);
    Ok(art)
}

/// Process fidelity versus storage time on the lifetime channel, with a
/// dephasing-time fit and the closed-form curve.
pub fn run_fig5(cfg: &ScenarioConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let memory = build_memory(cfg)?;
    let channel = channel_index(cfg, &cfg.lifetime_channel)?;
    let times = &cfg.fig5.storage_times;
    let points = times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| fidelity_point(cfg, &memory, channel, k, t))
        .collect::<Result<Vec<_>>>()?;

    let mut art = RunArtifact::new("fig5", cfg);
    let mut table = Table::new("fidelity", &FIDELITY_COLUMNS);
    for p in &points {
        table.push(fidelity_row(cfg, p));
    }
    art.tables.push(table);

    let model = channel_model(cfg, &cfg.lifetime_channel)?;
    let data = DecayDataset::new(
        points
            .iter()
            .map(|p| {
                if p.error > 0.0 {
                    DecayPoint::with_sigma(p.t, p.fidelity, p.error)
                } else {
                    DecayPoint::new(p.t, p.fidelity)
                }
            })
            .collect(),
    )?;
    let fit = fit_sigma_gamma(&data, &model, cfg.fig5.sigma_bounds);
    let fitted_sigma = fit.as_ref().ok().and_then(|r| r.get("sigma_gamma"));

    let mut curve = Table::new("model", &["t_ms", "model_configured", "model_fitted"]);
    let t_max = times.last().copied().unwrap_or(0.0);
    let n = cfg.fig5.curve_points;
    for i in 0..n {
        let t = t_max * i as f64 / (n - 1) as f64;
        let fitted = fitted_sigma.map_or(f64::NAN, |s| {
            let mut m = model;
            m.sigma_gamma = s;
            m.fidelity(t)
        });
        curve.push(vec![t.into(), model.fidelity(t).into(), fitted.into()]);
    }
    art.tables.push(curve);
    record_fit(&mut art, "sigma_gamma", fit);
    Ok(art)
}

/// Process fidelity for every channel at the readout time.
pub fn run_table1(cfg: &ScenarioConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let memory = build_memory(cfg)?;
    let points = (0..cfg.channels.len())
        .into_par_iter()
        .map(|c| fidelity_point(cfg, &memory, c, 0, cfg.readout_time))
        .collect::<Result<Vec<_>>>()?;

    let mut art = RunArtifact::new("table1", cfg);
    let mut columns = FIDELITY_COLUMNS.to_vec();
    columns.extend(["reference_fidelity", "reference_error"]);
    let mut table = Table::new("fidelity", &columns);
    for p in &points {
        let mut row = fidelity_row(cfg, p);
        let reference = TABLE1_TARGETS.iter().find(|(id, _, _)| *id == p.channel_id);
        row.push(reference.map_or(f64::NAN, |r| r.1).into());
        row.push(reference.map_or(f64::NAN, |r| r.2).into());
        table.push(row);
    }
    art.tables.push(table);
    Ok(art)
}

/// Full tomography for every channel and every configured storage time.
pub fn run_simulate(cfg: &ScenarioConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let memory = build_memory(cfg)?;
    let units: Vec<(usize, usize, f64)> = (0..cfg.channels.len())
        .flat_map(|c| {
            cfg.storage_times
                .iter()
                .enumerate()
                .map(move |(k, &t)| (c, k, t))
        })
        .collect();
    let points = units
        .par_iter()
        .map(|&(c, k, t)| fidelity_point(cfg, &memory, c, k, t))
        .collect::<Result<Vec<_>>>()?;
    let mut art = RunArtifact::new("simulate", cfg);
    let mut table = Table::new("fidelity", &FIDELITY_COLUMNS);
    for p in &points {
        table.push(fidelity_row(cfg, p));
    }
    art.tables.push(table);
    Ok(art)
}

/// Which model `fit` applies to a user dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitModel {
    /// `R0·exp(−t/τ)`.
    Exponential,
    /// Closed-form fidelity with only `σ_γ` free.
    SigmaGamma,
}

/// Fits a user-supplied dataset.
pub fn run_fit(cfg: &ScenarioConfig, data: &DecayDataset, model: FitModel) -> Result<RunArtifact> {
    cfg.validate()?;
    let mut art = RunArtifact::new("fit", cfg);
    let (name, fit) = match model {
        FitModel::Exponential => ("exponential", fit_exponential(data)),
        FitModel::SigmaGamma => {
            let fixed = channel_model(cfg, &cfg.lifetime_channel)?;
            (
                "sigma_gamma",
                fit_sigma_gamma(data, &fixed, cfg.fig5.sigma_bounds),
            )
        }
    };
    let mut table = Table::new("data", &["t_ms", "value", "sigma", "fitted", "residual"]);
    for p in data.points() {
        let fitted = match (&fit, model) {
            (Ok(r), FitModel::Exponential) => match (r.get("r0"), r.get("tau")) {
                (Some(r0), Some(tau)) => r0 * (-p.t / tau).exp(),
                _ => f64::NAN,
            },
            (Ok(r), FitModel::SigmaGamma) => {
                let mut m = channel_model(cfg, &cfg.lifetime_channel)?;
                m.sigma_gamma = r.get("sigma_gamma").unwrap_or(f64::NAN);
                m.fidelity(p.t)
            }
            (Err(_), _) => f64::NAN,
        };
        table.push(vec![
            p.t.into(),
            p.value.into(),
            p.sigma.unwrap_or(f64::NAN).into(),
            fitted.into(),
            (p.value - fitted).into(),
        ]);
    }
    art.tables.push(table);
    record_fit(&mut art, name, fit);
    Ok(art)
}

/// Static coherence factors that reproduce `targets` at the readout time.
///
/// Empty `targets` uses the reference per-channel fidelities.
pub fn run_calibrate(cfg: &ScenarioConfig, targets: &[(String, f64)]) -> Result<RunArtifact> {
    cfg.validate()?;
    let targets: Vec<(String, f64)> = if targets.is_empty() {
        TABLE1_TARGETS
            .iter()
            .filter(|(id, _, _)| cfg.channels.iter().any(|c| c.id == *id))
            .map(|(id, f, _)| (id.to_string(), *f))
            .collect()
    } else {
        targets.to_vec()
    };
    let mut art = RunArtifact::new("calibrate", cfg);
    let mut table = Table::new(
        "static_gamma",
        &[
            "channel",
            "theta_deg",
            "r0",
            "target_fidelity",
            "static_gamma",
        ],
    );
    let mut snippet = String::from("[memory.static_gamma]\n");
    for (id, target) in &targets {
        let ch = &cfg.channels[channel_index(cfg, id)?];
        let r0 = zero_time_efficiency(ch.theta, &cfg.memory)?;
        let g = calibrate_static_gamma(
            *target,
            cfg.readout_time,
            r0,
            cfg.memory.tau,
            cfg.memory.sigma_gamma,
            &cfg.detection,
        )?;
        table.push(vec![
            id.as_str().into(),
            ch.theta.into(),
            r0.into(),
            (*target).into(),
            g.into(),
        ]);
        snippet.push_str(&format!("{id} = {g:?}\n"));
    }
    art.tables.push(table);
    art.attachments.push(("static_gamma.toml".into(), snippet));
    Ok(art)
}
