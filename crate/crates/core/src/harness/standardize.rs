//! Per-column centering and scaling, targets included.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::types::Dataset;

/// Column statistics used to standardize a dataset.
///
/// Columns with zero population variance are centered but not scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRecord {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

fn moments(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

impl TransformRecord {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        let n = dataset.n_samples();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let x = dataset.features();
        let mut feature_mean = Vec::with_capacity(dataset.n_features());
        let mut feature_scale = Vec::with_capacity(dataset.n_features());
        for j in 0..dataset.n_features() {
            let (m, s) = moments(x.column(j).iter().copied(), n);
            feature_mean.push(m);
            feature_scale.push(s);
        }
        let (target_mean, target_scale) = moments(dataset.targets().iter().copied(), n);
        Ok(Self {
            feature_mean,
            feature_scale,
            target_mean,
            target_scale,
        })
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        check_len("standardized feature width", self.feature_mean.len(), dataset.n_features())?;
        let x = dataset.features();
        let features = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.feature_mean[j]) / self.feature_scale[j]
        });
        let targets = dataset.targets().map(|y| (y - self.target_mean) / self.target_scale);
        Dataset::new(dataset.name().to_string(), features, targets)
    }

    /// Maps standardized targets or predictions back to original units.
    pub fn invert_targets(&self, values: &DVector<f64>) -> DVector<f64> {
        values.map(|v| v * self.target_scale + self.target_mean)
    }
}

/// Standardizes every column to zero mean and unit population standard deviation.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, TransformRecord)> {
    let record = TransformRecord::fit(dataset)?;
    Ok((record.apply(dataset)?, record))
}
