//! Decay-model evaluation and parameter estimation.
//!
//! Two models are fitted: the exponential lifetime decay of the retrieval
//! efficiency, and the process-fidelity curve
//! `F(t) = ((1 + γ(t))·a(t) + N) / (2(a(t) + 2N))` with `a(t) = n̄·η_d·R₀·e^{−t/τ}`
//! and `γ(t) = γ₀·e^{−t²/σ_γ²}`.

use serde::{Deserialize, Serialize};

use crate::detection::DetectionConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    /// Storage time, ms.
    pub t: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl DecayPoint {
    pub fn new(t: f64, value: f64) -> Self {
        Self {
            t,
            value,
            sigma: None,
        }
    }

    pub fn with_sigma(t: f64, value: f64, sigma: f64) -> Self {
        Self {
            t,
            value,
            sigma: Some(sigma),
        }
    }

    fn weight(&self) -> f64 {
        self.sigma.map_or(1.0, |s| 1.0 / (s * s))
    }
}

/// Time series of a decaying quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayDataset {
    points: Vec<DecayPoint>,
}

impl DecayDataset {
    pub fn new(points: Vec<DecayPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("dataset is empty"));
        }
        let mut last = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if !(p.t >= 0.0 && p.t.is_finite()) {
                return Err(Error::param(format!(
                    "point {i}: time {} must be >= 0",
                    p.t
                )));
            }
            if p.t <= last {
                return Err(Error::param(format!(
                    "point {i}: times must be strictly increasing"
                )));
            }
            if !p.value.is_finite() {
                return Err(Error::param(format!("point {i}: value is not finite")));
            }
            if let Some(s) = p.sigma {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::param(format!("point {i}: sigma must be > 0")));
                }
            }
            last = p.t;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[DecayPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn weighted(&self) -> bool {
        self.points.iter().any(|p| p.sigma.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub parameters: Vec<FitParameter>,
    /// `sqrt(Σ w_i r_i²)`.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Set when the estimate sits on a bound of the search interval.
    pub at_bound: bool,
}

impl FitReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }

    pub fn std_err(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.variance.sqrt())
    }
}

/// Parameters of the closed-form process-fidelity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityModel {
    /// Zero-time retrieval efficiency.
    pub r0: f64,
    /// Storage lifetime, ms.
    pub tau: f64,
    /// e⁻¹ dephasing time, ms.
    pub sigma_gamma: f64,
    pub static_gamma: f64,
    /// Detected photons per pulse per unit retrieval efficiency, `n̄·η_d`.
    pub detected_per_pulse: f64,
    /// Background counts per pulse per detector.
    pub background_n: f64,
}

impl FidelityModel {
    pub fn new(
        r0: f64,
        tau: f64,
        sigma_gamma: f64,
        static_gamma: f64,
        det: &DetectionConfig,
    ) -> Self {
        Self {
            r0,
            tau,
            sigma_gamma,
            static_gamma,
            detected_per_pulse: det.n_bar * det.eta_d(),
            background_n: det.background_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r0) {
            return Err(Error::param(format!("R0 {} outside [0, 1]", self.r0)));
        }
        if !(self.tau > 0.0) || !(self.sigma_gamma > 0.0) {
            return Err(Error::param("tau and sigma_gamma must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.static_gamma) {
            return Err(Error::param("static_gamma must be in [0, 1]"));
        }
        if !(self.detected_per_pulse > 0.0) || !(self.background_n >= 0.0) {
            return Err(Error::param("detection parameters out of range"));
        }
        if self.r0 == 0.0 && self.background_n == 0.0 {
            return Err(Error::param(
                "fidelity undefined with no signal and no background",
            ));
        }
        Ok(())
    }

    /// Detected signal per pulse at time `t`.
    fn signal(&self, t: f64) -> f64 {
        self.detected_per_pulse * self.r0 * (-t / self.tau).exp()
    }

    fn gamma(&self, t: f64) -> f64 {
        self.static_gamma * (-(t * t) / (self.sigma_gamma * self.sigma_gamma)).exp()
    }

    fn combine(&self, signal: f64, gamma: f64) -> f64 {
        let n = self.background_n;
        ((1.0 + gamma) * signal + n) / (2.0 * (signal + 2.0 * n))
    }

    pub fn fidelity(&self, t: f64) -> f64 {
        self.combine(self.signal(t), self.gamma(t))
    }

    /// `∂F/∂σ_γ` at time `t`.
    fn d_sigma(&self, t: f64) -> f64 {
        let a = self.signal(t);
        let s = self.sigma_gamma;
        let dgamma = self.gamma(t) * 2.0 * t * t / (s * s * s);
        a / (2.0 * (a + 2.0 * self.background_n)) * dgamma
    }
}

/// Closed-form process fidelity at storage time `t` (ms).
pub fn closed_form_fidelity(
    t: f64,
    r0: f64,
    tau: f64,
    sigma_gamma: f64,
    static_gamma: f64,
    det: &DetectionConfig,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::param(format!("storage time {t} must be >= 0")));
    }
    let model = FidelityModel::new(r0, tau, sigma_gamma, static_gamma, det);
    model.validate()?;
    Ok(model.fidelity(t))
}

const MAX_GN_ITERATIONS: usize = 200;
const GN_TOL: f64 = 1e-8;

/// Least-squares fit of `R0·exp(−t/τ)`.
///
/// Seeded by a log-linear regression, refined by damped Gauss–Newton on
/// `(R0, 1/τ)`.
pub fn fit_exponential(data: &DecayDataset) -> Result<FitReport> {
    let pts = data.points();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "exponential fit needs at least 3 points, got {}",
            pts.len()
        )));
    }
    if let Some(p) = pts.iter().find(|p| !(p.value > 0.0)) {
        return Err(Error::Fit(format!(
            "non-positive value {} at t = {}",
            p.value, p.t
        )));
    }

    // ln y = ln R0 − k t, weighted by (y/σ)² since Var(ln y) ≈ σ²/y².
    let (mut sw, mut swt, mut swy, mut swtt, mut swty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let w = p.weight() * p.value * p.value;
        let ly = p.value.ln();
        sw += w;
        swt += w * p.t;
        swy += w * ly;
        swtt += w * p.t * p.t;
        swty += w * p.t * ly;
    }
    let det = sw * swtt - swt * swt;
    if !(det.abs() > 0.0) {
        return Err(Error::Fit("time points do not constrain the decay".into()));
    }
    let slope = (sw * swty - swt * swy) / det;
    let intercept = (swy - slope * swt) / sw;
    let mut r0 = intercept.exp();
    let mut k = -slope;

    let sse = |r0: f64, k: f64| -> f64 {
        pts.iter()
            .map(|p| p.weight() * (r0 * (-k * p.t).exp() - p.value).powi(2))
            .sum()
    };

    let mut current = sse(r0, k);
    let mut iterations = 0;
    let mut converged = false;
    let mut normal = [[0.0; 2]; 2];
    while iterations < MAX_GN_ITERATIONS {
        iterations += 1;
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in pts {
            let w = p.weight();
            let e = (-k * p.t).exp();
            let (j1, j2) = (e, -r0 * p.t * e);
            let r = r0 * e - p.value;
            a11 += w * j1 * j1;
            a12 += w * j1 * j2;
            a22 += w * j2 * j2;
            g1 += w * j1 * r;
            g2 += w * j2 * r;
        }
        normal = [[a11, a12], [a12, a22]];
        let d = a11 * a22 - a12 * a12;
        if !(d.abs() > 0.0) {
            return Err(Error::Fit("singular normal equations".into()));
        }
        let step_r0 = -(a22 * g1 - a12 * g2) / d;
        let step_k = -(a11 * g2 - a12 * g1) / d;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (nr, nk) = (r0 + lambda * step_r0, k + lambda * step_k);
            if nr > 0.0 {
                let trial = sse(nr, nk);
                if trial <= current {
                    r0 = nr;
                    k = nk;
                    current = trial;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        let rel = (lambda * step_r0 / r0)
            .abs()
            .max((lambda * step_k).abs() / k.abs().max(f64::MIN_POSITIVE));
        if !accepted || rel < GN_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "exponential fit did not converge in {MAX_GN_ITERATIONS} iterations"
        )));
    }
    if !(k > 0.0) {
        return Err(Error::Fit(format!("fitted decay rate {k} is not positive")));
    }

    let n = pts.len() as f64;
    let scale = if data.weighted() {
        1.0
    } else {
        current / (n - 2.0)
    };
    let [[a11, a12], [_, a22]] = normal;
    let d = a11 * a22 - a12 * a12;
    let var_r0 = scale * a22 / d;
    let var_k = scale * a11 / d;
    let tau = 1.0 / k;
    Ok(FitReport {
        parameters: vec![
            FitParameter {
                name: "r0".into(),
                value: r0,
                variance: var_r0,
            },
            FitParameter {
                name: "tau".into(),
                value: tau,
                variance: var_k * tau.powi(4),
            },
        ],
        residual_norm: current.sqrt(),
        iterations,
        at_bound: false,
    })
}

/// Search interval for the dephasing time, ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for SigmaBounds {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 1.0e6,
        }
    }
}

fn check_fidelity_data(data: &DecayDataset) -> Result<()> {
    if let Some(p) = data
        .points()
        .iter()
        .find(|p| !(p.value > 0.0 && p.value < 1.0))
    {
        return Err(Error::Fit(format!(
            "fidelity {} at t = {} is outside (0, 1)",
            p.value, p.t
        )));
    }
    Ok(())
}

fn weighted_sse(model: &FidelityModel, data: &DecayDataset) -> f64 {
    data.points()
        .iter()
        .map(|p| p.weight() * (model.fidelity(p.t) - p.value).powi(2))
        .sum()
}

/// Fits `σ_γ` with every other model parameter held fixed.
///
/// A coarse log-spaced scan brackets the minimum, golden-section search
/// narrows it, and Gauss–Newton steps polish the estimate.
pub fn fit_sigma_gamma(
    data: &DecayDataset,
    fixed: &FidelityModel,
    bounds: SigmaBounds,
) -> Result<FitReport> {
    if data.is_empty() {
        return Err(Error::Fit("dataset is empty".into()));
    }
    check_fidelity_data(data)?;
    if !(bounds.min > 0.0 && bounds.max > bounds.min && bounds.max.is_finite()) {
        return Err(Error::param(
            "sigma bounds must satisfy 0 < min < max < inf",
        ));
    }
    let mut model = *fixed;
    model.sigma_gamma = bounds.min;
    model.validate()?;

    let objective = |log_s: f64| {
        let mut m = model;
        m.sigma_gamma = log_s.exp();
        weighted_sse(&m, data)
    };
    let (lo, hi) = (bounds.min.ln(), bounds.max.ln());

    const GRID: usize = 200;
    let step = (hi - lo) / GRID as f64;
    let best = (0..=GRID)
        .map(|i| (i, objective(lo + step * i as f64)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = (lo + step * (best + 1) as f64).min(hi);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    let mut iterations = 0;
    while (b - a) > 1e-12 && iterations < 500 {
        iterations += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let mut sigma = (0.5 * (a + b)).exp().clamp(bounds.min, bounds.max);
    let edge = 1e-6;
    let mut at_bound =
        (sigma / bounds.max - 1.0).abs() < edge || (sigma / bounds.min - 1.0).abs() < edge;

    if !at_bound {
        let mut converged = false;
        for _ in 0..100 {
            iterations += 1;
            model.sigma_gamma = sigma;
            let (mut jj, mut jr) = (0.0, 0.0);
            for p in data.points() {
                let w = p.weight();
                let j = model.d_sigma(p.t);
                jj += w * j * j;
                jr += w * j * (model.fidelity(p.t) - p.value);
            }
            if !(jj > 0.0) {
                converged = true;
                break;
            }
            let current = weighted_sse(&model, data);
            let mut delta = -jr / jj;
            let mut accepted = false;
            for _ in 0..40 {
                let trial_sigma = (sigma + delta).clamp(bounds.min, bounds.max);
                let mut trial = model;
                trial.sigma_gamma = trial_sigma;
                if weighted_sse(&trial, data) <= current {
                    delta = trial_sigma - sigma;
                    sigma = trial_sigma;
                    accepted = true;
                    break;
                }
                delta *= 0.5;
            }
            if !accepted || (delta / sigma).abs() < 1e-10 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Fit("sigma_gamma refinement did not converge".into()));
        }
        at_bound = sigma >= bounds.max || sigma <= bounds.min;
    }

    model.sigma_gamma = sigma;
    let sse = weighted_sse(&model, data);
    let n = data.len() as f64;
    let jj: f64 = data
        .points()
        .iter()
        .map(|p| p.weight() * model.d_sigma(p.t).powi(2))
        .sum();
    let scale = if data.weighted() {
        1.0
    } else if n > 1.0 {
        sse / (n - 1.0)
    } else {
        0.0
    };
    let variance = if jj > 0.0 { scale / jj } else { f64::INFINITY };
    Ok(FitReport {
        parameters: vec![FitParameter {
            name: "sigma_gamma".into(),
            value: sigma,
            variance,
        }],
        residual_norm: sse.sqrt(),
        iterations,
        at_bound,
    })
}

/// Joint fit of `σ_γ` and the static coherence factor; not used by default.
///
/// Alternates a bounded `σ_γ` fit with the least-squares optimum of `γ₀`
/// (the model is affine in `γ₀`) until both settle.
pub fn fit_sigma_gamma_joint(
    data: &DecayDataset,
    fixed: &FidelityModel,
    bounds: SigmaBounds,
) -> Result<FitReport> {
    check_fidelity_data(data)?;
    if data.len() < 3 {
        return Err(Error::Fit("joint fit needs at least 3 points".into()));
    }
    let mut model = *fixed;
    let mut report = fit_sigma_gamma(data, &model, bounds)?;
    let mut iterations = report.iterations;
    for round in 0.. {
        model.sigma_gamma = report.get("sigma_gamma").unwrap_or(model.sigma_gamma);
        // F = c_i + s·g_i with g_i = a_i·e^{−t²/σ²} / (2(a_i + 2N)).
        let (mut gg, mut gr) = (0.0, 0.0);
        for p in data.points() {
            let w = p.weight();
            let mut unit = model;
            unit.static_gamma = 0.0;
            let c = unit.fidelity(p.t);
            unit.static_gamma = 1.0;
            let g = unit.fidelity(p.t) - c;
            gg += w * g * g;
            gr += w * g * (p.value - c);
        }
        let s = if gg > 0.0 {
            (gr / gg).clamp(0.0, 1.0)
        } else {
            model.static_gamma
        };
        let moved = (s - model.static_gamma).abs();
        model.static_gamma = s;
        report = fit_sigma_gamma(data, &model, bounds)?;
        iterations += report.iterations;
        if moved < 1e-12 {
            break;
        }
        if round >= MAX_GN_ITERATIONS {
            return Err(Error::Fit("joint fit did not converge".into()));
        }
    }
    report.parameters.push(FitParameter {
        name: "static_gamma".into(),
        value: model.static_gamma,
        variance: f64::NAN,
    });
    report.iterations = iterations;
    Ok(report)
}

/// Static coherence factor that makes the closed form hit `target_f` at `t`.
pub fn calibrate_static_gamma(
    target_f: f64,
    t: f64,
    r0: f64,
    tau: f64,
    sigma_gamma: f64,
    det: &DetectionConfig,
) -> Result<f64> {
    let lo = closed_form_fidelity(t, r0, tau, sigma_gamma, 0.0, det)?;
    let hi = closed_form_fidelity(t, r0, tau, sigma_gamma, 1.0, det)?;
    let tol = 1e-12;
    if !(target_f >= lo - tol && target_f <= hi + tol) {
        return Err(Error::param(format!(
            "target fidelity {target_f} is not achievable; attainable interval is [{lo:.6}, {hi:.6}]"
        )));
    }
    let model = FidelityModel::new(r0, tau, sigma_gamma, 1.0, det);
    let a = model.signal(t);
    let n = model.background_n;
    if a == 0.0 {
        // F is independent of γ₀ when no signal is detected.
        return Ok(1.0);
    }
    let gamma = (2.0 * target_f * (a + 2.0 * n) - n) / a - 1.0;
    let decay = (-(t * t) / (sigma_gamma * sigma_gamma)).exp();
    Ok((gamma / decay).clamp(0.0, 1.0))
}
