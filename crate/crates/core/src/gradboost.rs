//! Gradient boosting whose stage coefficients minimize the noise-expected loss.
//!
//! Stage 1 is the constant regressor `φ₁ ≡ 1`. Each later stage fits a tree to the
//! negative loss gradient of the current ensemble and then picks its coefficient
//! `α_t` against the channel covariance `Σ`. With `robust = false` the same
//! procedure runs with `Σ = 0`.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mae::folded_normal_mean;
use crate::numerics::normal_funcs;
use crate::trees::{fit_tree_with, RegressionTree, TreeParams};
use crate::types::{AggregationWeights, Dataset, Method, NoiseModel, PredictionMatrix, Predictor};

const FORMAT_HEADER: &str = "noisy-ensemble-gradboost v1";
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Mae,
}

impl Loss {
    pub fn as_str(&self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::Mae => "mae",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(Loss::Mse),
            "mae" => Ok(Loss::Mae),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `2(y − f̂)` for MSE, `sign(y − f̂)` for MAE.
pub fn negative_gradient(loss: Loss, y: &DVector<f64>, f_hat: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("current predictions", y.len(), f_hat.len())?;
    let r = y - f_hat;
    Ok(match loss {
        Loss::Mse => r * 2.0,
        Loss::Mae => r.map(sign),
    })
}

fn check_stage(
    phi_t: &DVector<f64>,
    y: &DVector<f64>,
    f_hat_prev: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_prefix: &[f64],
    t: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Invalid("stage index t starts at 1".into()));
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len("stage outputs", y.len(), phi_t.len())?;
    check_len("previous predictions", y.len(), f_hat_prev.len())?;
    check_len("coefficient prefix", t - 1, alpha_prefix.len())?;
    if sigma.dim() < t {
        return Err(Error::DimensionMismatch {
            context: "noise covariance (at least t channels)",
            expected: t,
            actual: sigma.dim(),
        });
    }
    Ok(())
}

/// Expected squared loss of the stage-`t` ensemble `f̂_{t−1} + α φ_t` when every
/// channel `τ ≤ t` carries its noise.
pub fn expected_stage_loss_mse(
    phi_t: &DVector<f64>,
    y: &DVector<f64>,
    f_hat_prev: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_prefix: &[f64],
    t: usize,
    alpha: f64,
) -> Result<f64> {
    check_stage(phi_t, y, f_hat_prev, sigma, alpha_prefix, t)?;
    let n = y.len() as f64;
    let model: f64 = (0..y.len())
        .map(|i| (y[i] - f_hat_prev[i] - alpha * phi_t[i]).powi(2))
        .sum::<f64>()
        / n;
    let mut coef = alpha_prefix.to_vec();
    coef.push(alpha);
    let a = DVector::from_vec(coef);
    let s = sigma.cov().view((0, 0), (t, t));
    Ok(model + a.dot(&(s * &a)))
}

/// Closed-form stage coefficient for the squared loss.
///
/// Setting the derivative of [`expected_stage_loss_mse`] to zero gives
/// `α_t = [mean(φ_t (y − f̂)) − Σ_{τ<t} α_τ Σ_{t,τ}] / [σ_t² + mean(φ_t²)]`.
/// Stage 1 (with `φ₁ ≡ 1` and `f̂ = 0`) reduces to `mean(y) / (1 + σ₁²)`.
pub fn robust_alpha_mse(
    phi_t: &DVector<f64>,
    y: &DVector<f64>,
    f_hat_prev: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_prefix: &[f64],
    t: usize,
) -> Result<f64> {
    check_stage(phi_t, y, f_hat_prev, sigma, alpha_prefix, t)?;
    let n = y.len() as f64;
    let k = t - 1;
    let mut fit = 0.0;
    let mut power = 0.0;
    for i in 0..y.len() {
        fit += phi_t[i] * (y[i] - f_hat_prev[i]);
        power += phi_t[i] * phi_t[i];
    }
    let cross: f64 = alpha_prefix
        .iter()
        .enumerate()
        .map(|(tau, a)| a * sigma.cov()[(k, tau)])
        .sum();
    let denom = sigma.variance(k) + power / n;
    if !(denom > 0.0) {
        return Err(Error::Singular(format!(
            "stage {t}: zero noise variance and identically zero regressor"
        )));
    }
    Ok((fit / n - cross) / denom)
}

/// Expected absolute loss of stage `t`, with prior-stage noise entering through its
/// mean only: `(1/N_s) Σᵢ E|ωᵢ − α(φ_t(xᵢ) + n_t)|` where `ωᵢ = yᵢ − f̂_{t−1}(xᵢ)`.
pub fn expected_stage_loss_mae(
    phi_t: &DVector<f64>,
    y: &DVector<f64>,
    f_hat_prev: &DVector<f64>,
    sigma_t: f64,
    alpha: f64,
) -> Result<f64> {
    check_len("stage outputs", y.len(), phi_t.len())?;
    check_len("previous predictions", y.len(), f_hat_prev.len())?;
    let s = alpha.abs() * sigma_t;
    Ok((0..y.len())
        .map(|i| folded_normal_mean(alpha * phi_t[i] - (y[i] - f_hat_prev[i]), s))
        .sum::<f64>()
        / y.len() as f64)
}

/// Derivative of [`expected_stage_loss_mae`] in `α` (a subgradient at kinks).
fn stage_mae_derivative(phi_t: &DVector<f64>, omega: &DVector<f64>, sigma_t: f64, alpha: f64) -> f64 {
    let s = alpha.abs() * sigma_t;
    let n = omega.len() as f64;
    let mut acc = 0.0;
    for i in 0..omega.len() {
        let mu = alpha * phi_t[i] - omega[i];
        if s > 0.0 {
            let (pdf, cdf) = normal_funcs(mu / s);
            acc += (2.0 * cdf - 1.0) * phi_t[i] + 2.0 * pdf * sign(alpha) * sigma_t;
        } else {
            acc += sign(mu) * phi_t[i];
        }
    }
    acc / n
}

/// Stage coefficient for the absolute loss, found by golden-section search on an
/// expanding bracket and refined by bisection on the derivative.
pub fn robust_alpha_mae(
    phi_t: &DVector<f64>,
    y: &DVector<f64>,
    f_hat_prev: &DVector<f64>,
    sigma: &NoiseModel,
    alpha_prefix: &[f64],
    t: usize,
) -> Result<f64> {
    check_stage(phi_t, y, f_hat_prev, sigma, alpha_prefix, t)?;
    let sigma_t = sigma.variance(t - 1).max(0.0).sqrt();
    let omega = y - f_hat_prev;
    let h = |a: f64| {
        let s = a.abs() * sigma_t;
        (0..omega.len())
            .map(|i| folded_normal_mean(a * phi_t[i] - omega[i], s))
            .sum::<f64>()
            / omega.len() as f64
    };
    let dh = |a: f64| stage_mae_derivative(phi_t, &omega, sigma_t, a);

    let (mut lo, mut hi) = if t == 1 {
        let min = y.min().min(0.0);
        let max = y.max().max(0.0);
        (min, max)
    } else {
        (-1.0, 1.0)
    };
    if lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let mut doublings = 0;
    while dh(hi) < 0.0 {
        let width = hi - lo;
        hi += width;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::NonConvergence(format!("stage {t}: MAE bracket did not close above")));
        }
    }
    doublings = 0;
    while dh(lo) > 0.0 {
        let width = hi - lo;
        lo -= width;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::NonConvergence(format!("stage {t}: MAE bracket did not close below")));
        }
    }

    let (a, b) = golden_section(&h, lo, hi, 1e-9 * (1.0 + lo.abs().max(hi.abs())));
    let mut best = 0.5 * (a + b);
    // widen slightly so the derivative sign change is inside the refinement window
    let pad = (b - a).max(1e-12);
    let (mut l, mut r) = (a - pad, b + pad);
    if dh(l) < 0.0 && dh(r) > 0.0 {
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if dh(m) > 0.0 {
                r = m;
            } else {
                l = m;
            }
        }
        let refined = 0.5 * (l + r);
        if h(refined) <= h(best) {
            best = refined;
        }
    }
    if !best.is_finite() {
        return Err(Error::NonFinite(format!("stage {t} MAE coefficient")));
    }
    Ok(best)
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a, b)
}

/// A boosted ensemble `f̂_T = Σ_t α_t φ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBoostModel {
    stages: Vec<(RegressionTree, f64)>,
    loss: Loss,
    robust: bool,
    sigma: NoiseModel,
}

impl GradBoostModel {
    pub fn stages(&self) -> &[(RegressionTree, f64)] {
        &self.stages
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn robust(&self) -> bool {
        self.robust
    }

    /// Covariance the coefficients were fitted against (zero for the non-robust baseline).
    pub fn sigma(&self) -> &NoiseModel {
        &self.sigma
    }

    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(self.stages.len(), self.stages.iter().map(|s| s.1))
    }

    pub fn weights(&self) -> Result<AggregationWeights> {
        let method = if self.robust { Method::Rgb } else { Method::Gb };
        AggregationWeights::new(self.coefficients(), method)
    }

    /// The first `t` stages as a model of their own.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.stages.len() {
            return Err(Error::Invalid(format!(
                "cannot truncate a {}-stage model to {t} stages",
                self.stages.len()
            )));
        }
        Ok(Self {
            stages: self.stages[..t].to_vec(),
            loss: self.loss,
            robust: self.robust,
            sigma: self.sigma.leading(t)?,
        })
    }

    /// Noiseless prediction.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len("input width", self.n_features(), x.len())?;
        Ok(self.stages.iter().map(|(tree, a)| a * tree.predict_unchecked(x)).sum())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<DVector<f64>> {
        let phi = self.prediction_matrix(data)?;
        phi.aggregate(&self.coefficients())
    }

    /// Writes the model in a line-oriented text format.
    pub fn to_flat_string(&self) -> String {
        let mut out = String::new();
        let t = self.stages.len();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "loss {}", self.loss);
        let _ = writeln!(out, "robust {}", self.robust);
        let _ = writeln!(out, "stages {t}");
        for i in 0..t {
            let row: Vec<String> = (0..t).map(|j| format!("{:e}", self.sigma.cov()[(i, j)])).collect();
            let _ = writeln!(out, "sigma {}", row.join(" "));
        }
        for (tree, alpha) in &self.stages {
            let _ = writeln!(out, "alpha {alpha:e}");
            tree.write_flat(&mut out);
        }
        out
    }

    pub fn from_flat_str(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty model file".into()))?;
        if header.trim() != FORMAT_HEADER {
            return Err(err(ln, format!("unsupported header `{header}`")));
        }
        let keyed = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<(usize, String)> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {key}")))?;
            let rest = line
                .trim()
                .strip_prefix(key)
                .ok_or_else(|| err(ln, format!("expected `{key} ...`, got `{line}`")))?;
            Ok((ln, rest.trim().to_string()))
        };
        let (ln, loss) = keyed(&mut lines, "loss")?;
        let loss: Loss = loss.parse().map_err(|e: Error| err(ln, e.to_string()))?;
        let (ln, robust) = keyed(&mut lines, "robust")?;
        let robust: bool = robust.parse().map_err(|_| err(ln, format!("bad flag `{robust}`")))?;
        let (ln, t) = keyed(&mut lines, "stages")?;
        let t: usize = t.parse().map_err(|_| err(ln, format!("bad stage count `{t}`")))?;
        if t == 0 {
            return Err(err(ln, "model without stages".into()));
        }
        let mut cov = DMatrix::zeros(t, t);
        for i in 0..t {
            let (ln, row) = keyed(&mut lines, "sigma")?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(ln, e.to_string()))?;
            if vals.len() != t {
                return Err(err(ln, format!("expected {t} covariance entries, got {}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                cov[(i, j)] = v;
            }
        }
        let mut stages = Vec::with_capacity(t);
        for _ in 0..t {
            let (ln, a) = keyed(&mut lines, "alpha")?;
            let alpha: f64 = a.parse().map_err(|_| err(ln, format!("bad coefficient `{a}`")))?;
            let tree = RegressionTree::read_flat(&mut lines).map_err(|(l, m)| err(l, m))?;
            stages.push((tree, alpha));
        }
        if let Some((ln, extra)) = lines.next() {
            return Err(err(ln, format!("trailing content `{extra}`")));
        }
        let width = stages[0].0.n_features();
        if stages.iter().any(|(tree, _)| tree.n_features() != width) {
            return Err(err(0, "stages disagree on input width".into()));
        }
        Ok(Self {
            stages,
            loss,
            robust,
            sigma: NoiseModel::new(cov, None)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_flat_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_flat_str(&text, &path.display().to_string())
    }
}

impl Predictor for GradBoostModel {
    fn n_features(&self) -> usize {
        self.stages[0].0.n_features()
    }

    fn n_regressors(&self) -> usize {
        self.stages.len()
    }

    fn prediction_matrix(&self, dataset: &Dataset) -> Result<PredictionMatrix> {
        check_len("dataset feature width", self.n_features(), dataset.n_features())?;
        let mut cols = DMatrix::zeros(dataset.n_samples(), self.stages.len());
        for (t, (tree, _)) in self.stages.iter().enumerate() {
            cols.set_column(t, &tree.predict_dataset(dataset)?);
        }
        PredictionMatrix::new(cols)
    }
}

/// Trains a `T`-stage boosted ensemble.
///
/// With `robust = true` the stage coefficients account for `Σ` (which must have at
/// least `T` channels); with `robust = false`, `Σ` is ignored and treated as zero.
pub fn fit_gradboost(
    dataset: &Dataset,
    n_stages: usize,
    sigma: &NoiseModel,
    loss: Loss,
    tree_params: TreeParams,
    robust: bool,
) -> Result<GradBoostModel> {
    if n_stages == 0 {
        return Err(Error::InvalidConfig("gradient boosting needs T >= 1".into()));
    }
    let sigma = if robust {
        if sigma.dim() < n_stages {
            return Err(Error::DimensionMismatch {
                context: "noise covariance channels for boosting",
                expected: n_stages,
                actual: sigma.dim(),
            });
        }
        sigma.leading(n_stages)?
    } else {
        NoiseModel::zeros(n_stages)
    };
    let y = dataset.targets();
    let n = dataset.n_samples();
    let stage_alpha = |phi: &DVector<f64>, f_hat: &DVector<f64>, prefix: &[f64], t: usize| -> Result<f64> {
        // a regressor that is identically zero on a noiseless channel cannot change the fit
        if sigma.variance(t - 1) == 0.0 && phi.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        match loss {
            Loss::Mse => robust_alpha_mse(phi, y, f_hat, &sigma, prefix, t),
            Loss::Mae => robust_alpha_mae(phi, y, f_hat, &sigma, prefix, t),
        }
    };

    let ones = DVector::from_element(n, 1.0);
    let mut f_hat = DVector::zeros(n);
    let alpha1 = stage_alpha(&ones, &f_hat, &[], 1)?;
    f_hat += &ones * alpha1;
    let mut stages = vec![(RegressionTree::constant(1.0, dataset.n_features()), alpha1)];
    let mut coefs = vec![alpha1];

    for t in 2..=n_stages {
        let targets = negative_gradient(loss, y, &f_hat)?;
        let tree = fit_tree_with(&dataset.with_targets(targets)?, tree_params)?;
        let phi = tree.predict_dataset(dataset)?;
        let alpha = stage_alpha(&phi, &f_hat, &coefs, t)?;
        f_hat += &phi * alpha;
        coefs.push(alpha);
        stages.push((tree, alpha));
    }
    log::debug!("boosted {n_stages} stages ({loss}, robust={robust}), coefficients {coefs:?}");
    Ok(GradBoostModel {
        stages,
        loss,
        robust,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
        let mut best = (f64::INFINITY, lo);
        for k in 0..=points {
            let a = lo + (hi - lo) * k as f64 / points as f64;
            let val = f(a);
            if val < best.0 {
                best = (val, a);
            }
        }
        best.1
    }

    #[test]
    fn negative_gradient_examples() {
        assert_eq!(negative_gradient(Loss::Mse, &v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(negative_gradient(Loss::Mse, &v(&[3.0]), &v(&[1.0])).unwrap(), v(&[4.0]));
        assert_eq!(
            negative_gradient(Loss::Mae, &v(&[2.0, -1.0, 0.0]), &v(&[0.0, 0.0, 0.0])).unwrap(),
            v(&[1.0, -1.0, 0.0])
        );
        assert!(negative_gradient(Loss::Mae, &v(&[1.0]), &v(&[1.0, 2.0])).is_err());
        assert!("hinge".parse::<Loss>().is_err());
    }

    #[test]
    fn alpha_mse_stage_one() {
        let y = v(&[0.5, 1.5]);
        let ones = v(&[1.0, 1.0]);
        let zero = v(&[0.0, 0.0]);
        let a = robust_alpha_mse(&ones, &y, &zero, &NoiseModel::zeros(1), &[], 1).unwrap();
        assert_eq!(a, 1.0);
        let one = NoiseModel::diagonal(&[1.0]).unwrap();
        assert_eq!(robust_alpha_mse(&ones, &y, &zero, &one, &[], 1).unwrap(), 0.5);
    }

    #[test]
    fn alpha_mse_stage_two_examples() {
        let sigma = NoiseModel::diagonal(&[0.0, 1.0]).unwrap();
        let a = robust_alpha_mse(&v(&[1.0]), &v(&[1.0]), &v(&[0.0]), &sigma, &[1.0], 2).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn alpha_mse_noise_cancellation() {
        // zero residual, α₁ = 1, Σ₂₁ = 0.5: the coefficient only offsets the correlated prior noise.
        // Σ₂₂ = 0.25 is the smallest variance that keeps Σ positive semidefinite.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.25]);
        let sigma = NoiseModel::new(cov, None).unwrap();
        let (phi, y, f) = (v(&[1.0]), v(&[1.0]), v(&[1.0]));
        let a = robust_alpha_mse(&phi, &y, &f, &sigma, &[1.0], 2).unwrap();
        let grid = grid_argmin(|a| expected_stage_loss_mse(&phi, &y, &f, &sigma, &[1.0], 2, a).unwrap(), -3.0, 3.0, 600_000);
        assert!((a - grid).abs() < 1e-4, "{a} vs {grid}");
        assert!((a - (-0.5 / 1.25)).abs() < 1e-12);
    }

    #[test]
    fn alpha_mse_zero_denominator() {
        let sigma = NoiseModel::zeros(2);
        let r = robust_alpha_mse(&v(&[0.0, 0.0]), &v(&[1.0, 2.0]), &v(&[0.0, 0.0]), &sigma, &[1.0], 2);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn alpha_mse_checks_shapes() {
        let sigma = NoiseModel::zeros(1);
        assert!(robust_alpha_mse(&v(&[1.0]), &v(&[1.0]), &v(&[0.0]), &sigma, &[1.0], 2).is_err());
        assert!(robust_alpha_mse(&v(&[1.0]), &v(&[1.0]), &v(&[0.0]), &sigma, &[], 0).is_err());
        let sigma = NoiseModel::zeros(2);
        assert!(robust_alpha_mse(&v(&[1.0]), &v(&[1.0]), &v(&[0.0]), &sigma, &[], 2).is_err());
    }

    #[test]
    fn alpha_mae_examples() {
        let sigma = NoiseModel::zeros(2);
        let a = robust_alpha_mae(&v(&[2.0]), &v(&[4.0]), &v(&[0.0]), &sigma, &[0.0], 2).unwrap();
        assert!((a - 2.0).abs() < 1e-9, "{a}");
        // weighted median: minimize mean |ω − αφ|
        let phi = v(&[1.0, 2.0, 0.5, 3.0, 1.0]);
        let omega = v(&[0.3, 1.0, -0.2, 2.5, 4.0]);
        let zero = DVector::zeros(5);
        let a = robust_alpha_mae(&phi, &omega, &zero, &sigma, &[0.0], 2).unwrap();
        let f = |a: f64| expected_stage_loss_mae(&phi, &omega, &zero, 0.0, a).unwrap();
        let grid = grid_argmin(f, -5.0, 5.0, 1_000_000);
        assert!(f(a) <= f(grid) + 1e-9, "{a} vs {grid}");
    }

    #[test]
    fn alpha_mae_noisy_matches_dense_grid() {
        let mut rng = stream_rng(1, &[7]);
        for _ in 0..5 {
            let n = 12;
            let phi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let omega = DVector::from_fn(n, |i, _| 0.8 * phi[i] + 0.3 * rng.sample::<f64, _>(StandardNormal));
            let zero = DVector::zeros(n);
            let sigma = NoiseModel::diagonal(&[0.0, 1.0]).unwrap();
            let a = robust_alpha_mae(&phi, &omega, &zero, &sigma, &[0.0], 2).unwrap();
            let f = |a: f64| expected_stage_loss_mae(&phi, &omega, &zero, 1.0, a).unwrap();
            let grid = grid_argmin(f, -3.0, 3.0, 100_000);
            assert!((a - grid).abs() < 1e-4, "{a} vs {grid}");
        }
    }

    #[test]
    fn alpha_mae_stage_one_is_median_without_noise() {
        let y = v(&[0.0, 0.0, 10.0, 3.0, 1.0]);
        let ones = DVector::from_element(5, 1.0);
        let a = robust_alpha_mae(&ones, &y, &DVector::zeros(5), &NoiseModel::zeros(1), &[], 1).unwrap();
        assert!((a - 1.0).abs() < 1e-9);
    }

    fn step_dataset() -> Dataset {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 4.5]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| if x[0] < 0.0 { 0.0 } else { 1.0 }).collect();
        Dataset::from_rows("step", &xs, &ys).unwrap()
    }

    fn sine_like(seed: u64, n: usize) -> Dataset {
        let mut rng = stream_rng(seed, &[11]);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..6.0)]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].sin() + (6.0 * x[0]).sin()).collect();
        Dataset::from_rows("sine", &xs, &ys).unwrap()
    }

    #[test]
    fn single_stage_is_constant() {
        let data = step_dataset();
        let m = fit_gradboost(&data, 1, &NoiseModel::zeros(1), Loss::Mse, TreeParams::default(), true).unwrap();
        assert_eq!(m.n_stages(), 1);
        let p = m.predict_dataset(&data).unwrap();
        assert!(p.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn step_target_fit_exactly() {
        let data = step_dataset();
        let params = TreeParams { max_depth: 1, min_leaf: 1 };
        let m = fit_gradboost(&data, 4, &NoiseModel::zeros(4), Loss::Mse, params, true).unwrap();
        let p = m.predict_dataset(&data).unwrap();
        let mse = (p - data.targets()).norm_squared() / 10.0;
        assert!(mse < 1e-6, "{mse}");
    }

    #[test]
    fn non_robust_equals_zero_sigma_robust() {
        let data = sine_like(3, 80);
        let params = TreeParams { max_depth: 2, min_leaf: 2 };
        let noisy = NoiseModel::diagonal(&[0.3; 6]).unwrap();
        for loss in [Loss::Mse, Loss::Mae] {
            let a = fit_gradboost(&data, 6, &noisy, loss, params, false).unwrap();
            let b = fit_gradboost(&data, 6, &NoiseModel::zeros(6), loss, params, true).unwrap();
            assert_eq!(a.coefficients(), b.coefficients());
            assert_eq!(a.stages().iter().map(|s| &s.0).collect::<Vec<_>>(), b.stages().iter().map(|s| &s.0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn expected_training_loss_non_increasing() {
        let data = sine_like(4, 120);
        let t = 12;
        let cov = {
            let mut rng = stream_rng(2, &[2]);
            let b = DMatrix::from_fn(t, t, |_, _| rng.sample::<f64, _>(StandardNormal));
            &b * b.transpose() * 0.01
        };
        let sigma = NoiseModel::new(cov, None).unwrap();
        let params = TreeParams { max_depth: 1, min_leaf: 2 };
        let m = fit_gradboost(&data, t, &sigma, Loss::Mse, params, true).unwrap();
        let phi = m.prediction_matrix(&data).unwrap();
        let coefs = m.coefficients();
        let mut prev = f64::INFINITY;
        for k in 1..=t {
            let a = coefs.rows(0, k).into_owned();
            let p = phi.leading_columns(k).unwrap();
            let model = (p.values() * &a - data.targets()).norm_squared() / data.n_samples() as f64;
            let noise = sigma.leading(k).unwrap().quadratic_form(&a).unwrap();
            let total = model + noise;
            assert!(total <= prev + 1e-12, "stage {k}: {total} > {prev}");
            prev = total;
        }
    }

    #[test]
    fn mae_stages_locally_optimal() {
        let data = sine_like(5, 60);
        let t = 5;
        let sigma = NoiseModel::diagonal(&[0.05; 5]).unwrap();
        let params = TreeParams { max_depth: 2, min_leaf: 2 };
        let m = fit_gradboost(&data, t, &sigma, Loss::Mae, params, true).unwrap();
        let phi = m.prediction_matrix(&data).unwrap();
        let coefs = m.coefficients();
        let y = data.targets();
        let mut f_hat = DVector::zeros(y.len());
        for k in 0..t {
            let col = phi.values().column(k).into_owned();
            let s = sigma.variance(k).sqrt();
            let at = |a: f64| expected_stage_loss_mae(&col, y, &f_hat, s, a).unwrap();
            let base = at(coefs[k]);
            assert!(at(coefs[k] + 1e-3) >= base - 1e-12 && at(coefs[k] - 1e-3) >= base - 1e-12, "stage {}", k + 1);
            f_hat += &col * coefs[k];
        }
    }

    #[test]
    fn flat_roundtrip() {
        let data = sine_like(6, 50);
        let sigma = NoiseModel::diagonal(&[0.1, 0.2, 0.3]).unwrap();
        let m = fit_gradboost(&data, 3, &sigma, Loss::Mse, TreeParams { max_depth: 2, min_leaf: 2 }, true).unwrap();
        let text = m.to_flat_string();
        let back = GradBoostModel::from_flat_str(&text, "mem").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_flat_string(), text);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gb.txt");
        m.save(&path).unwrap();
        assert_eq!(GradBoostModel::load(&path).unwrap(), m);
    }

    #[test]
    fn flat_errors_name_lines() {
        let data = sine_like(6, 30);
        let m = fit_gradboost(&data, 2, &NoiseModel::zeros(2), Loss::Mae, TreeParams::default(), false).unwrap();
        let text = m.to_flat_string().replace("alpha ", "alfa ");
        match GradBoostModel::from_flat_str(&text, "bad.txt") {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "bad.txt");
                assert!(line > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(GradBoostModel::from_flat_str("something else", "x").is_err());
    }

    #[test]
    fn truncation_and_weights() {
        let data = sine_like(8, 40);
        let m = fit_gradboost(&data, 4, &NoiseModel::zeros(4), Loss::Mse, TreeParams::default(), true).unwrap();
        let t2 = m.truncated(2).unwrap();
        assert_eq!(t2.coefficients(), m.coefficients().rows(0, 2).into_owned());
        assert_eq!(m.weights().unwrap().method(), Method::Rgb);
        assert!(m.truncated(5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn alpha_mse_is_grid_minimizer(seed in 0u64..100_000) {
            let mut rng = stream_rng(seed, &[13]);
            let n = 8;
            let t = 3;
            let phi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let f = DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(t, t, |_, _| rng.sample::<f64, _>(StandardNormal));
            let sigma = NoiseModel::new(&b * b.transpose() * 0.5, None).unwrap();
            let prefix = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = robust_alpha_mse(&phi, &y, &f, &sigma, &prefix, t).unwrap();
            let loss = |x: f64| expected_stage_loss_mse(&phi, &y, &f, &sigma, &prefix, t, x).unwrap();
            let centre = a.clamp(-50.0, 50.0);
            let grid = grid_argmin(loss, centre - 5.0, centre + 5.0, 200_000);
            prop_assert!((a - grid).abs() <= 1e-4);
        }
    }
}
