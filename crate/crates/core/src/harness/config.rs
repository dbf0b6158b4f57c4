//! Experiment configuration, JSON parsing and grid syntax.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gradboost::Loss;
use crate::harness::data::DatasetSpec;
use crate::mae::{MaeGdConfig, UpperBoundMode};
use crate::noise::ProfileKind;
use crate::trees::{BaggingConfig, TreeParams};
use crate::types::Method;

const LATTICE_TOL: f64 = 1e-9;
const MAX_GRID_POINTS: usize = 100_000;

/// A list of reals, written in JSON either as an array, a single number, or a
/// `start:step:stop` / comma-separated string.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::str::FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_grid(s).map(Grid)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            One(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(Grid(v)),
            Raw::One(x) => Ok(Grid(vec![x])),
            Raw::Text(s) => parse_grid(&s).map(Grid).map_err(serde::de::Error::custom),
        }
    }
}

/// Parses `start:step:stop` (stop included when it lies on the lattice within 1e-9),
/// a comma-separated list, or a single number.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let number = |s: &str| -> Result<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("invalid number `{s}` in grid `{text}`")))?;
        if !v.is_finite() {
            return Err(Error::InvalidConfig(format!("non-finite value in grid `{text}`")));
        }
        Ok(v)
    };
    if text.is_empty() {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    let parts: Vec<&str> = text.split(':').collect();
    match parts.len() {
        1 => text.split(',').map(number).collect(),
        3 => {
            let (start, step, stop) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
            if step == 0.0 {
                return Err(Error::InvalidConfig(format!("grid `{text}` has zero step")));
            }
            let span = (stop - start) / step;
            if span < -LATTICE_TOL {
                return Err(Error::InvalidConfig(format!("grid `{text}` is empty")));
            }
            let count = (span + LATTICE_TOL).floor() as usize + 1;
            if count > MAX_GRID_POINTS {
                return Err(Error::InvalidConfig(format!("grid `{text}` has too many points")));
            }
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(Error::InvalidConfig(format!(
            "grid `{text}` must be `start:step:stop`, a comma list, or a number"
        ))),
    }
}

/// Everything a recipe needs; unset JSON keys take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `sine`, `hyperplane`, or a CSV path.
    pub dataset: String,
    pub n_samples: usize,
    pub measurement_noise_std: f64,
    pub hyperplane_dim: usize,
    pub methods: Vec<Method>,
    pub profile: ProfileKind,
    pub snr_db: Grid,
    pub eps_y: f64,
    pub k: usize,
    pub realizations: usize,
    pub noisy_fraction: f64,
    pub lambda: Grid,
    pub t_grid: Grid,
    pub n_trees: usize,
    pub sample_fraction: f64,
    pub tree: TreeParams,
    pub gd: MaeGdConfig,
    pub gb_loss: Loss,
    pub bound_mode: UpperBoundMode,
    pub seed: u64,
    pub standardize: bool,
    /// Fit standardization statistics on each training split instead of the whole dataset.
    pub standardize_per_fold: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "sine".into(),
            n_samples: 1000,
            measurement_noise_std: 0.1,
            hyperplane_dim: 3,
            methods: vec![Method::Bem, Method::Gem, Method::Tem],
            profile: ProfileKind::NoisierSubset { m: 2, a: 20.0 },
            snr_db: Grid((0..=10).map(|i| -12.0 + 3.0 * i as f64).collect()),
            eps_y: 1.0,
            k: 5,
            realizations: 100,
            noisy_fraction: 1.0,
            lambda: Grid(vec![1.0]),
            t_grid: Grid(vec![4.0, 16.0, 64.0]),
            n_trees: 32,
            sample_fraction: 0.6,
            tree: TreeParams::default(),
            gd: MaeGdConfig::default(),
            gb_loss: Loss::Mse,
            bound_mode: UpperBoundMode::Combined,
            seed: 0,
            standardize: true,
            standardize_per_fold: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidConfig(format!("{field}: {msg}")));
        if self.dataset.trim().is_empty() {
            return bad("dataset", "must not be empty".into());
        }
        if self.k < 2 {
            return bad("k", format!("must be >= 2, got {}", self.k));
        }
        if self.realizations == 0 {
            return bad("realizations", "must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return bad("noisy_fraction", format!("must lie in [0, 1], got {}", self.noisy_fraction));
        }
        if !(self.eps_y > 0.0 && self.eps_y.is_finite()) {
            return bad("eps_y", format!("must be positive, got {}", self.eps_y));
        }
        if self.methods.is_empty() {
            return bad("methods", "must not be empty".into());
        }
        for (name, grid) in [("snr_db", &self.snr_db), ("lambda", &self.lambda), ("t_grid", &self.t_grid)] {
            if grid.is_empty() {
                return bad(name, "grid must not be empty".into());
            }
            if grid.values().iter().any(|v| !v.is_finite()) {
                return bad(name, "grid values must be finite".into());
            }
        }
        if self.lambda.values().iter().any(|&l| l < 0.0) {
            return bad("lambda", "values must be >= 0".into());
        }
        for &t in self.t_grid.values() {
            if t < 1.0 || t.fract() != 0.0 {
                return bad("t_grid", format!("values must be positive integers, got {t}"));
            }
        }
        if self.tree.max_depth == 0 {
            return bad("tree.max_depth", "must be >= 1".into());
        }
        if self.tree.min_leaf == 0 {
            return bad("tree.min_leaf", "must be >= 1".into());
        }
        self.profile.validate().map_err(|e| Error::InvalidConfig(format!("profile: {e}")))?;
        self.gd.validate().map_err(|e| Error::InvalidConfig(format!("gd: {e}")))?;
        self.bagging(0).validate(self.n_samples.max(1)).map_err(|e| Error::InvalidConfig(format!("bagging: {e}")))?;
        if matches!(self.dataset.as_str(), "sine" | "hyperplane") {
            if self.n_samples < self.k {
                return bad("n_samples", format!("must be >= k ({}), got {}", self.k, self.n_samples));
            }
            if !(self.measurement_noise_std >= 0.0 && self.measurement_noise_std.is_finite()) {
                return bad("measurement_noise_std", format!("must be >= 0, got {}", self.measurement_noise_std));
            }
            if self.hyperplane_dim == 0 {
                return bad("hyperplane_dim", "must be >= 1".into());
            }
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        match self.dataset.as_str() {
            "sine" => DatasetSpec::Sine {
                n_samples: self.n_samples,
                noise_std: self.measurement_noise_std,
                seed: self.seed,
            },
            "hyperplane" => DatasetSpec::Hyperplane {
                n_samples: self.n_samples,
                dim: self.hyperplane_dim,
                noise_std: self.measurement_noise_std,
                seed: self.seed,
            },
            path => DatasetSpec::File(PathBuf::from(path)),
        }
    }

    /// Bagging settings with a seed derived from the master seed and `fold`.
    pub fn bagging(&self, fold: usize) -> BaggingConfig {
        BaggingConfig {
            n_trees: self.n_trees,
            sample_fraction: self.sample_fraction,
            max_depth: self.tree.max_depth,
            min_leaf: self.tree.min_leaf,
            seed: self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(fold as u64 + 1),
        }
    }

    pub fn t_values(&self) -> Vec<usize> {
        self.t_grid.values().iter().map(|&t| t as usize).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Recursively overlays `patch` onto `base`; objects merge key by key.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Parses `text` as JSON over `defaults`. Unknown keys and type mismatches are errors.
pub fn config_from_json_over(text: &str, defaults: &ExperimentConfig, origin: &str) -> Result<ExperimentConfig> {
    let patch: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if !patch.is_object() {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: "config must be a JSON object".into(),
        });
    }
    let mut merged = serde_json::to_value(defaults).expect("config serializes");
    merge_json(&mut merged, patch);
    let config: ExperimentConfig = serde_json::from_value(merged)
        .map_err(|e| Error::InvalidConfig(format!("{origin}: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Strictly parses a JSON config file; omitted keys take the library defaults.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    config_from_json_over(&text, &ExperimentConfig::default(), &path.display().to_string())
}
