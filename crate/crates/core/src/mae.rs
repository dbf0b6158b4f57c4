//! Expected absolute error under Gaussian channel noise.
//!
//! For a fixed `α` the aggregated error on sample `i` is normal with mean
//! `μᵢ = αᵀφ(xᵢ) − yᵢ` and standard deviation `σ = √(αᵀΣα)`, so its expected
//! absolute value is a folded-normal mean. This module evaluates that loss and its
//! gradient, minimizes it with momentum descent, and brackets the optimum with
//! closed-form bounds.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::{min_constrained_quadratic, normal_funcs, sqrt_2_over_pi};
use crate::types::{AggregationWeights, Method, NoiseModel, PredictionMatrix};

/// Below this aggregated noise level the loss is evaluated in its `σ = 0` limit.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// `E|X|` for `X ~ N(μ, s²)`; `|μ|` when `s = 0`.
pub fn folded_normal_mean(mu: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return mu.abs();
    }
    let r = mu / s;
    let (pdf, cdf) = normal_funcs(r);
    2.0 * s * pdf + mu * (2.0 * cdf - 1.0)
}

fn residuals(alpha: &DVector<f64>, phi: &PredictionMatrix, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("targets", phi.n_samples(), y.len())?;
    Ok(phi.aggregate(alpha)? - y)
}

fn noise_std(alpha: &DVector<f64>, sigma: &NoiseModel) -> Result<f64> {
    Ok(sigma.quadratic_form(alpha)?.max(0.0).sqrt())
}

/// Noiseless mean absolute error `J₁(α)`.
pub fn noiseless_mae(alpha: &DVector<f64>, phi: &PredictionMatrix, y: &DVector<f64>) -> Result<f64> {
    let mu = residuals(alpha, phi, y)?;
    Ok(mu.iter().map(|m| m.abs()).sum::<f64>() / mu.len() as f64)
}

/// Expected MAE `J̃₁(α)` of the noisy aggregate.
pub fn expected_mae(
    alpha: &DVector<f64>,
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
) -> Result<f64> {
    let mu = residuals(alpha, phi, y)?;
    let s = noise_std(alpha, sigma)?;
    let s = if s < SIGMA_FLOOR { 0.0 } else { s };
    Ok(mu.iter().map(|&m| folded_normal_mean(m, s)).sum::<f64>() / mu.len() as f64)
}

/// Gradient of [`expected_mae`].
///
/// With `ρᵢ = μᵢ/σ` and `σ' = Σα/σ`, the `ρ'` contributions of the two folded-normal
/// terms cancel, leaving `(1/N_s) Σᵢ [(2Φ(ρᵢ) − 1) φ(xᵢ) + 2 g(ρᵢ) σ']`.
/// For `σ < SIGMA_FLOOR` this returns the noiseless subgradient.
pub fn expected_mae_gradient(
    alpha: &DVector<f64>,
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
) -> Result<DVector<f64>> {
    let mu = residuals(alpha, phi, y)?;
    let s = noise_std(alpha, sigma)?;
    if s < SIGMA_FLOOR {
        return Ok(sign_gradient(&mu, phi));
    }
    let n = mu.len() as f64;
    let mut slope = DVector::zeros(mu.len());
    let mut density = 0.0;
    for (i, &m) in mu.iter().enumerate() {
        let (pdf, cdf) = normal_funcs(m / s);
        slope[i] = 2.0 * cdf - 1.0;
        density += 2.0 * pdf;
    }
    let sigma_prime = sigma.cov() * alpha / s;
    Ok((phi.values().tr_mul(&slope) + sigma_prime * density) / n)
}

/// Subgradient of the noiseless MAE, `(1/N_s) Σᵢ φ(xᵢ) sign(μᵢ)` with `sign(0) = 0`.
pub fn noiseless_mae_gradient(
    alpha: &DVector<f64>,
    phi: &PredictionMatrix,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mu = residuals(alpha, phi, y)?;
    Ok(sign_gradient(&mu, phi))
}

fn sign_gradient(mu: &DVector<f64>, phi: &PredictionMatrix) -> DVector<f64> {
    let signs = mu.map(|m| if m > 0.0 { 1.0 } else if m < 0.0 { -1.0 } else { 0.0 });
    phi.values().tr_mul(&signs) / mu.len() as f64
}

/// Settings of the momentum descent with accumulated-gradient step normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaeGdConfig {
    pub i_min: usize,
    pub i_max: usize,
    pub eta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub eps: f64,
    /// Minimize the expected loss (true) or the noiseless loss (false).
    pub robust: bool,
}

impl Default for MaeGdConfig {
    fn default() -> Self {
        Self {
            i_min: 100,
            i_max: 5000,
            eta: 0.05,
            gamma: 0.9,
            tau: 1e-9,
            eps: 1e-8,
            robust: true,
        }
    }
}

impl MaeGdConfig {
    pub fn non_robust() -> Self {
        Self {
            robust: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.i_min > self.i_max {
            return bad(format!("i_min ({}) exceeds i_max ({})", self.i_min, self.i_max));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau >= 0.0) {
            return bad(format!("tau must be non-negative, got {}", self.tau));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

/// Result of a descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub weights: AggregationWeights,
    /// Objective at the returned weights.
    pub objective: f64,
    /// Iterations performed before stopping.
    pub iterations: usize,
}

/// Minimizes the expected (or noiseless) MAE starting from uniform weights and
/// returns the best iterate visited.
pub fn optimize_weights_gd(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    config: &MaeGdConfig,
) -> Result<AggregationWeights> {
    optimize_weights_gd_outcome(phi, y, sigma, config).map(|o| o.weights)
}

pub fn optimize_weights_gd_outcome(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    config: &MaeGdConfig,
) -> Result<GdOutcome> {
    config.validate()?;
    check_len("targets", phi.n_samples(), y.len())?;
    check_len("noise covariance", phi.n_regressors(), sigma.dim())?;
    let t = phi.n_regressors();
    let objective = |a: &DVector<f64>| {
        if config.robust {
            expected_mae(a, phi, y, sigma)
        } else {
            noiseless_mae(a, phi, y)
        }
    };
    let gradient = |a: &DVector<f64>| {
        if config.robust {
            expected_mae_gradient(a, phi, y, sigma)
        } else {
            noiseless_mae_gradient(a, phi, y)
        }
    };

    let mut alpha = DVector::from_element(t, 1.0 / t as f64);
    let mut delta = DVector::zeros(t);
    let mut accum = DVector::zeros(t);
    let mut prev = objective(&alpha)?;
    let mut best = (prev, alpha.clone());
    let mut iterations = 0;
    for i in 1..=config.i_max {
        iterations = i;
        let g = gradient(&alpha)?;
        accum += g.component_mul(&g);
        for k in 0..t {
            delta[k] = config.gamma * delta[k] - config.eta * g[k] / (accum[k] + config.eps).sqrt();
        }
        alpha += &delta;
        let current = objective(&alpha)?;
        if !current.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!(
                "MAE descent objective {current} at iteration {i} (alpha = {:?})",
                alpha.as_slice()
            )));
        }
        if current < best.0 {
            best = (current, alpha.clone());
        }
        if i >= config.i_min && (current - prev).abs() <= config.tau {
            break;
        }
        prev = current;
    }
    let method = if config.robust { Method::MaeGd } else { Method::MaeGdNonRobust };
    Ok(GdOutcome {
        weights: AggregationWeights::new(best.1, method)?,
        objective: best.0,
        iterations,
    })
}

/// Which coefficient vector an upper bound is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpperBoundMode {
    /// A caller-supplied vector.
    Generic,
    /// Uniform weights `1/T`.
    Bem,
    /// The normalized vector minimizing `αᵀΣα`.
    MinEig,
    /// The smaller of `Bem` and `MinEig`.
    Combined,
}

impl UpperBoundMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            UpperBoundMode::Generic => "generic",
            UpperBoundMode::Bem => "bem",
            UpperBoundMode::MinEig => "mineig",
            UpperBoundMode::Combined => "combined",
        }
    }
}

impl fmt::Display for UpperBoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpperBoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generic" => Ok(UpperBoundMode::Generic),
            "bem" => Ok(UpperBoundMode::Bem),
            "mineig" => Ok(UpperBoundMode::MinEig),
            "combined" => Ok(UpperBoundMode::Combined),
            other => Err(Error::InvalidConfig(format!("unknown upper-bound mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperSource {
    Generic,
    Bem,
    Mineig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerSource {
    NoiseDominated,
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeBoundReport {
    pub lower: f64,
    pub upper: f64,
    pub upper_source: UpperSource,
    pub lower_source: LowerSource,
}

impl MaeBoundReport {
    pub fn is_ordered(&self) -> bool {
        self.lower <= self.upper
    }
}

/// Upper bound on the optimal expected MAE.
pub fn mae_upper_bound(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    mode: UpperBoundMode,
    alpha_opt: Option<&DVector<f64>>,
) -> Result<f64> {
    mae_upper_bound_with_source(phi, y, sigma, mode, alpha_opt).map(|(v, _)| v)
}

pub fn mae_upper_bound_with_source(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    mode: UpperBoundMode,
    alpha_opt: Option<&DVector<f64>>,
) -> Result<(f64, UpperSource)> {
    check_len("noise covariance", phi.n_regressors(), sigma.dim())?;
    let t = phi.n_regressors();
    let c = sqrt_2_over_pi();
    match mode {
        UpperBoundMode::Generic => {
            let alpha = alpha_opt
                .ok_or_else(|| Error::Invalid("generic upper bound needs a coefficient vector".into()))?;
            let value = noiseless_mae(alpha, phi, y)? + c * noise_std(alpha, sigma)?;
            Ok((value, UpperSource::Generic))
        }
        UpperBoundMode::Bem => {
            let bem = DVector::from_element(t, 1.0 / t as f64);
            let total: f64 = sigma.cov().sum().max(0.0);
            let value = noiseless_mae(&bem, phi, y)? + c * total.sqrt() / t as f64;
            Ok((value, UpperSource::Bem))
        }
        UpperBoundMode::MinEig => {
            let eig = min_constrained_quadratic(sigma.cov())?;
            let v = &eig.vector / eig.vector.sum();
            let value = noiseless_mae(&v, phi, y)? + c * eig.value.sqrt();
            Ok((value, UpperSource::Mineig))
        }
        UpperBoundMode::Combined => {
            let bem = mae_upper_bound_with_source(phi, y, sigma, UpperBoundMode::Bem, None)?;
            let eig = mae_upper_bound_with_source(phi, y, sigma, UpperBoundMode::MinEig, None)?;
            Ok(if eig.0 < bem.0 { eig } else { bem })
        }
    }
}

/// Lower bound on the optimal expected MAE, given the noiseless optimum `α†`.
pub fn mae_lower_bound(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_dagger: &DVector<f64>,
) -> Result<f64> {
    mae_lower_bound_with_source(phi, y, sigma, alpha_dagger).map(|(v, _)| v)
}

pub fn mae_lower_bound_with_source(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_dagger: &DVector<f64>,
) -> Result<(f64, LowerSource)> {
    check_len("noise covariance", phi.n_regressors(), sigma.dim())?;
    check_len("alpha dagger", phi.n_regressors(), alpha_dagger.len())?;
    let simple = noiseless_mae(alpha_dagger, phi, y)?;
    let sigma_bar = min_constrained_quadratic(sigma.cov())?.value.max(0.0).sqrt();
    let p = phi.values();
    let mut correction = 0.0;
    for i in 0..p.nrows() {
        let mu_bar = p.row(i).iter().map(|v| (v - y[i]).abs()).fold(0.0, f64::max);
        let delta = sqrt_2_over_pi() * sigma_bar - mu_bar;
        if delta > 0.0 {
            correction += delta * (-mu_bar * mu_bar / (2.0 * sigma_bar * sigma_bar)).exp();
        } else {
            // sign'(Δ̄) = 0 for negative Δ̄; a zero Δ̄ contributes nothing either way
            correction += delta;
        }
    }
    let noise_dominated = simple + correction / p.nrows() as f64;
    Ok(if noise_dominated > simple {
        (noise_dominated, LowerSource::NoiseDominated)
    } else {
        (simple, LowerSource::Simple)
    })
}

/// Combined lower and upper bounds.
pub fn mae_bounds(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_dagger: &DVector<f64>,
) -> Result<MaeBoundReport> {
    let (lower, lower_source) = mae_lower_bound_with_source(phi, y, sigma, alpha_dagger)?;
    let (upper, upper_source) =
        mae_upper_bound_with_source(phi, y, sigma, UpperBoundMode::Combined, None)?;
    if lower > upper {
        log::warn!("MAE bounds out of order: lower {lower:e} > upper {upper:e}");
    }
    Ok(MaeBoundReport {
        lower,
        upper,
        upper_source,
        lower_source,
    })
}
