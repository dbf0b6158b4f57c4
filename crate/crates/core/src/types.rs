//! Shared domain types and the elementary prediction operations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::noise::NoiseProfileSpec;
use crate::trees::RegressionTree;

/// Feature rows plus scalar targets. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: DMatrix<f64>,
    targets: DVector<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: DMatrix<f64>,
        targets: DVector<f64>,
    ) -> Result<Self> {
        if features.nrows() == 0 || targets.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.ncols() == 0 {
            return Err(Error::Invalid("dataset needs at least one feature".into()));
        }
        check_len("dataset targets", features.nrows(), targets.len())?;
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains NaN or infinite values".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            targets,
        })
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let width = rows[0].len();
        for row in rows {
            check_len("feature row width", width, row.len())?;
        }
        let features = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
        Self::new(name, features, DVector::from_column_slice(targets))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    /// Normalized sum of squared targets, `(1/N) Σ y²`.
    pub fn eps_y(&self) -> f64 {
        self.targets.norm_squared() / self.n_samples() as f64
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let features = self.features.select_rows(indices);
        let targets = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.targets[i]));
        Self::new(self.name.clone(), features, targets)
    }

    /// Same features, different targets (used for boosting pseudo-targets).
    pub fn with_targets(&self, targets: DVector<f64>) -> Result<Self> {
        Self::new(self.name.clone(), self.features.clone(), targets)
    }

    pub fn with_name(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..self.clone()
        }
    }
}

/// `N_s × T` matrix of base-regressor outputs; column `t` holds `φ_t(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix(DMatrix<f64>);

impl PredictionMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Invalid("prediction matrix must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction matrix entry".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.0.ncols()
    }

    /// Noiseless aggregate `Φα`.
    pub fn aggregate(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("aggregation weights", self.n_regressors(), alpha.len())?;
        Ok(&self.0 * alpha)
    }

    /// Keeps the first `t` columns.
    pub fn leading_columns(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.n_regressors() {
            return Err(Error::Invalid(format!(
                "cannot take {t} of {} columns",
                self.n_regressors()
            )));
        }
        Ok(Self(self.0.columns(0, t).into_owned()))
    }
}

/// Which procedure produced a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Bem,
    Gem,
    Tem,
    MaeGd,
    MaeGdNonRobust,
    Gb,
    Rgb,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Bem,
        Method::Gem,
        Method::Tem,
        Method::MaeGd,
        Method::MaeGdNonRobust,
        Method::Gb,
        Method::Rgb,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bem => "bem",
            Method::Gem => "gem",
            Method::Tem => "tem",
            Method::MaeGd => "mae-gd",
            Method::MaeGdNonRobust => "mae-gd-nonrobust",
            Method::Gb => "gb",
            Method::Rgb => "rgb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Coefficient vector `α` with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    alpha: DVector<f64>,
    method: Method,
}

impl AggregationWeights {
    pub fn new(alpha: DVector<f64>, method: Method) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Invalid("aggregation weights need T >= 1".into()));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("{method} weights")));
        }
        Ok(Self { alpha, method })
    }

    pub fn from_slice(alpha: &[f64], method: Method) -> Result<Self> {
        Self::new(DVector::from_column_slice(alpha), method)
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.alpha.sum()
    }
}

/// Channel noise covariance `Σ` (T×T, symmetric PSD) plus the profile it was built from.
///
/// A square-root factor `L` with `L Lᵀ = Σ` is computed once at construction so that
/// sampling is a matrix-vector product.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    profile: Option<NoiseProfileSpec>,
}

/// Eigenvalues below this are treated as numerical noise around zero.
pub const PSD_TOLERANCE: f64 = 1e-10;

impl NoiseModel {
    pub fn new(cov: DMatrix<f64>, profile: Option<NoiseProfileSpec>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() == 0 {
            return Err(Error::Invalid(format!(
                "covariance must be square and non-empty, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance entry".into()));
        }
        let asym = crate::numerics::max_asymmetry(&cov);
        if asym > 1e-10 * cov.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        if let Some(d) = cov.diagonal().iter().find(|d| **d < 0.0) {
            return Err(Error::NotPsd(*d));
        }
        let factor = if is_diagonal(&cov) {
            DMatrix::from_diagonal(&cov.diagonal().map(f64::sqrt))
        } else {
            let sym = (&cov + cov.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let min = eig.eigenvalues.min();
            if min < -PSD_TOLERANCE {
                return Err(Error::NotPsd(min));
            }
            let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&roots)
        };
        Ok(Self {
            cov,
            factor,
            profile,
        })
    }

    /// The all-zero covariance (noiseless channels).
    pub fn zeros(t: usize) -> Self {
        Self {
            cov: DMatrix::zeros(t, t),
            factor: DMatrix::zeros(t, t),
            profile: None,
        }
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
            None,
        )
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Square-root factor `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn profile(&self) -> Option<&NoiseProfileSpec> {
        self.profile.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn variance(&self, t: usize) -> f64 {
        self.cov[(t, t)]
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    pub fn is_zero(&self) -> bool {
        self.cov.iter().all(|v| *v == 0.0)
    }

    /// Aggregated noise power `αᵀΣα`.
    pub fn quadratic_form(&self, alpha: &DVector<f64>) -> Result<f64> {
        check_len("noise covariance", self.dim(), alpha.len())?;
        Ok(alpha.dot(&(&self.cov * alpha)))
    }

    /// The leading `t × t` block (channels `0..t`).
    pub fn leading(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.dim() {
            return Err(Error::Invalid(format!(
                "cannot take leading {t} of {} channels",
                self.dim()
            )));
        }
        Self::new(self.cov.view((0, 0), (t, t)).into_owned(), self.profile)
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    Bagging,
    GradBoost,
}

/// An ensemble of fitted base regressors `{φ_t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    trees: Vec<RegressionTree>,
    kind: EnsembleKind,
}

impl EnsembleModel {
    pub fn new(trees: Vec<RegressionTree>, kind: EnsembleKind) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::Invalid("ensemble needs at least one regressor".into()))?;
        let width = first.n_features();
        for tree in &trees {
            check_len("ensemble input width", width, tree.n_features())?;
        }
        Ok(Self { trees, kind })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }
}

/// Anything that maps a dataset to an `N_s × T` matrix of base-regressor outputs.
pub trait Predictor {
    fn n_features(&self) -> usize;
    fn n_regressors(&self) -> usize;
    fn prediction_matrix(&self, dataset: &Dataset) -> Result<PredictionMatrix>;
}

impl Predictor for EnsembleModel {
    fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    fn n_regressors(&self) -> usize {
        self.trees.len()
    }

    fn prediction_matrix(&self, dataset: &Dataset) -> Result<PredictionMatrix> {
        build_prediction_matrix(self, dataset)
    }
}

/// Evaluates every base regressor on every row: entry `(i, t) = φ_t(x_i)`.
pub fn build_prediction_matrix(ensemble: &EnsembleModel, dataset: &Dataset) -> Result<PredictionMatrix> {
    check_len(
        "dataset feature width",
        ensemble.n_features(),
        dataset.n_features(),
    )?;
    let x = dataset.features();
    let mut values = DMatrix::zeros(dataset.n_samples(), ensemble.len());
    let mut row = vec![0.0; dataset.n_features()];
    for i in 0..dataset.n_samples() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        for (t, tree) in ensemble.trees().iter().enumerate() {
            values[(i, t)] = tree.predict_unchecked(&row);
        }
    }
    PredictionMatrix::new(values)
}

/// Noisy ensemble prediction `αᵀ(φ + n)`.
pub fn noisy_predict(weights: &AggregationWeights, base_outputs: &[f64], noise_draw: &[f64]) -> Result<f64> {
    check_len("base outputs", weights.len(), base_outputs.len())?;
    check_len("noise draw", weights.len(), noise_draw.len())?;
    Ok(weights
        .alpha()
        .iter()
        .zip(base_outputs.iter().zip(noise_draw))
        .map(|(a, (p, n))| a * (p + n))
        .sum())
}
