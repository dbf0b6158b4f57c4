//! Monte-Carlo evaluation of a noisy linear aggregate on a test set.

use nalgebra::DVector;
use rand::seq::SliceRandom;

use crate::error::{check_len, Error, Result};
use crate::mae::folded_normal_mean;
use crate::noise::{sample_noise_into, stream_rng};
use crate::types::{AggregationWeights, Dataset, NoiseModel, PredictionMatrix, Predictor};

const SUBSET_STREAM: u64 = u64::MAX;

/// How noise is applied during evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    /// Noise realizations `R`.
    pub realizations: usize,
    /// Fraction of test rows that receive channel noise.
    pub noisy_fraction: f64,
    pub seed: u64,
    /// Stream coordinates for this evaluation, e.g. `[fold, snr index]`.
    pub stream: Vec<u64>,
}

impl EvalSettings {
    pub fn new(realizations: usize, noisy_fraction: f64, seed: u64, stream: Vec<u64>) -> Self {
        Self {
            realizations,
            noisy_fraction,
            seed,
            stream,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("realizations must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return Err(Error::InvalidConfig(format!(
                "noisy_fraction must lie in [0, 1], got {}",
                self.noisy_fraction
            )));
        }
        Ok(())
    }

    fn rng_for(&self, tail: u64) -> rand_chacha::ChaCha8Rng {
        let mut stream = self.stream.clone();
        stream.push(tail);
        stream_rng(self.seed, &stream)
    }
}

/// Realization means and standard errors, plus the matching analytic expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyEvaluation {
    /// `√(mean MSE)`.
    pub rmse: f64,
    pub mae: f64,
    /// Delta-method standard error of `rmse`.
    pub rmse_se: f64,
    pub mae_se: f64,
    /// Mean of the per-realization MSE.
    pub mse: f64,
    /// Analytic expected MSE for the same noisy subset.
    pub expected_mse: f64,
    /// Analytic expected MAE for the same noisy subset.
    pub expected_mae: f64,
}

/// Rows that receive noise: `round(fraction · n)` of them, chosen by a seeded shuffle.
pub fn noisy_subset(n: usize, fraction: f64, settings: &EvalSettings) -> Vec<bool> {
    let count = ((fraction * n as f64).round() as usize).min(n);
    let mut mask = vec![false; n];
    if count == n {
        mask.iter_mut().for_each(|m| *m = true);
        return mask;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut settings.rng_for(SUBSET_STREAM));
    for &i in &order[..count] {
        mask[i] = true;
    }
    mask
}

pub fn evaluate_noisy(
    model: &dyn Predictor,
    weights: &AggregationWeights,
    sigma: &NoiseModel,
    test: &Dataset,
    settings: &EvalSettings,
) -> Result<NoisyEvaluation> {
    let phi = model.prediction_matrix(test)?;
    evaluate_noisy_matrix(&phi, test.targets(), weights, sigma, settings)
}

/// Draws a fresh channel-noise vector for every noisy test row in each realization
/// and reports realization means of MSE and MAE.
///
/// When no row is noisy or `Σ = 0` the single deterministic evaluation is returned
/// with zero standard errors.
pub fn evaluate_noisy_matrix(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    weights: &AggregationWeights,
    sigma: &NoiseModel,
    settings: &EvalSettings,
) -> Result<NoisyEvaluation> {
    settings.validate()?;
    check_len("test targets", phi.n_samples(), y.len())?;
    check_len("weights", phi.n_regressors(), weights.len())?;
    check_len("noise covariance", phi.n_regressors(), sigma.dim())?;
    let n = y.len();
    let alpha = weights.alpha();
    let clean = phi.aggregate(alpha)? - y;
    let mask = noisy_subset(n, settings.noisy_fraction, settings);
    let n_noisy = mask.iter().filter(|m| **m).count();

    let agg_sd = sigma.quadratic_form(alpha)?.max(0.0).sqrt();
    let mut expected_mse = 0.0;
    let mut expected_mae = 0.0;
    for (i, &noisy) in mask.iter().enumerate() {
        let s = if noisy { agg_sd } else { 0.0 };
        expected_mse += clean[i] * clean[i] + s * s;
        expected_mae += folded_normal_mean(clean[i], s);
    }
    expected_mse /= n as f64;
    expected_mae /= n as f64;

    if n_noisy == 0 || sigma.is_zero() {
        let mse = clean.norm_squared() / n as f64;
        let mae = clean.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        return Ok(NoisyEvaluation {
            rmse: mse.sqrt(),
            mae,
            rmse_se: 0.0,
            mae_se: 0.0,
            mse,
            expected_mse,
            expected_mae,
        });
    }

    let t = alpha.len();
    let r_count = settings.realizations;
    let mut mses = Vec::with_capacity(r_count);
    let mut maes = Vec::with_capacity(r_count);
    let mut z = vec![0.0; t];
    let mut draw = vec![0.0; t];
    for r in 0..r_count {
        let mut rng = settings.rng_for(r as u64);
        let mut se = 0.0;
        let mut ae = 0.0;
        for i in 0..n {
            let mut e = clean[i];
            if mask[i] {
                sample_noise_into(sigma, &mut rng, &mut z, &mut draw);
                e += alpha.iter().zip(&draw).map(|(a, d)| a * d).sum::<f64>();
            }
            se += e * e;
            ae += e.abs();
        }
        mses.push(se / n as f64);
        maes.push(ae / n as f64);
    }
    let (mse, mse_se) = mean_and_se(&mses);
    let (mae, mae_se) = mean_and_se(&maes);
    let rmse = mse.sqrt();
    let rmse_se = if rmse > 0.0 { mse_se / (2.0 * rmse) } else { 0.0 };
    Ok(NoisyEvaluation {
        rmse,
        mae,
        rmse_se,
        mae_se,
        mse,
        expected_mse,
        expected_mae,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Percentage RMSE reduction of TEM relative to GEM, normalized by the noiseless GEM RMSE.
pub fn mse_reduction(gem_noisy_rmse: f64, tem_noisy_rmse: f64, gem_noiseless_rmse: f64) -> Result<f64> {
    if !(gem_noiseless_rmse > 0.0) {
        return Err(Error::Invalid(format!(
            "noiseless GEM RMSE must be positive, got {gem_noiseless_rmse}"
        )));
    }
    Ok(100.0 * (gem_noisy_rmse - tem_noisy_rmse) / gem_noiseless_rmse)
}
