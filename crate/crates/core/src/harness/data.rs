//! Synthetic generators and CSV input/output.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noise::stream_rng;
use crate::types::Dataset;

const SINE_STREAM: u64 = 0x5e1e;
const HYPERPLANE_STREAM: u64 = 0x4797;

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// `y = sin x + sin 6x + ε`, `x ~ U[0, 6]`.
    Sine { n_samples: usize, noise_std: f64, seed: u64 },
    /// `y = cᵀx + ε` with `c ~ N(0, I)` and `x ~ U[0, 1]^d`.
    Hyperplane {
        n_samples: usize,
        dim: usize,
        noise_std: f64,
        seed: u64,
    },
    /// CSV with a header row; the last column is the target.
    File(PathBuf),
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Sine { .. } => "sine".into(),
            DatasetSpec::Hyperplane { .. } => "hyperplane".into(),
            DatasetSpec::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".into()),
        }
    }
}

pub fn load_or_generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match spec {
        DatasetSpec::Sine {
            n_samples,
            noise_std,
            seed,
        } => generate_sine(*n_samples, *noise_std, *seed),
        DatasetSpec::Hyperplane {
            n_samples,
            dim,
            noise_std,
            seed,
        } => generate_hyperplane(*n_samples, *dim, *noise_std, *seed).map(|(d, _)| d),
        DatasetSpec::File(path) => read_csv(path),
    }
}

pub fn sine_target(x: f64) -> f64 {
    x.sin() + (6.0 * x).sin()
}

pub fn generate_sine(n_samples: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    check_generator(n_samples, noise_std)?;
    let mut rng = stream_rng(seed, &[SINE_STREAM]);
    let mut x = DMatrix::zeros(n_samples, 1);
    let mut y = DVector::zeros(n_samples);
    for i in 0..n_samples {
        let xi: f64 = rng.random_range(0.0..=6.0);
        let eps: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = xi;
        y[i] = sine_target(xi) + noise_std * eps;
    }
    Dataset::new("sine", x, y)
}

/// Returns the dataset and the drawn coefficient vector `c`.
pub fn generate_hyperplane(
    n_samples: usize,
    dim: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, DVector<f64>)> {
    check_generator(n_samples, noise_std)?;
    if dim == 0 {
        return Err(Error::InvalidConfig("hyperplane dimension must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, &[HYPERPLANE_STREAM]);
    let c = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(n_samples, dim, |_, _| rng.random_range(0.0..1.0));
    let mut y = &x * &c;
    for v in y.iter_mut() {
        *v += noise_std * rng.sample::<f64, _>(StandardNormal);
    }
    Ok((Dataset::new("hyperplane", x, y)?, c))
}

fn check_generator(n_samples: usize, noise_std: f64) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "measurement noise std must be >= 0, got {noise_std}"
        )));
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&display, e))?;
    let width = reader.headers().map_err(|e| csv_error(&display, e))?.len();
    if width < 2 {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!("need at least one feature and a target column, got {width}"),
        });
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width {
            return Err(Error::Parse {
                path: display,
                line,
                message: format!("expected {width} fields, got {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(width);
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                message: format!("non-numeric field `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    line,
                    message: format!("non-finite field `{field}`"),
                });
            }
            values.push(v);
        }
        targets.push(values.pop().unwrap_or_default());
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let name = DatasetSpec::File(path.to_path_buf()).name();
    Dataset::from_rows(name, &rows, &targets)
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            path: path.to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes `x0,…,x{u−1},y` with shortest round-trip float formatting.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(&path.display().to_string(), e))?;
    let u = dataset.n_features();
    let mut header: Vec<String> = (0..u).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let wrap = |e: csv::Error| csv_error(&path.display().to_string(), e);
    writer.write_record(&header).map_err(wrap)?;
    let x = dataset.features();
    let y = dataset.targets();
    for i in 0..dataset.n_samples() {
        let mut rec: Vec<String> = (0..u).map(|j| x[(i, j)].to_string()).collect();
        rec.push(y[i].to_string());
        writer.write_record(&rec).map_err(wrap)?;
    }
    writer.flush()?;
    Ok(())
}
