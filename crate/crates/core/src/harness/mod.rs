//! Datasets, cross-validation, noisy evaluation and experiment recipes.

pub mod config;
pub mod data;
pub mod evaluate;
pub mod experiments;
pub mod kfold;
pub mod report;
pub mod standardize;

pub use config::{parse_config, parse_grid, ExperimentConfig, Grid};
pub use data::{load_or_generate_dataset, read_csv, write_csv, DatasetSpec};
pub use evaluate::{evaluate_noisy, evaluate_noisy_matrix, mse_reduction, EvalSettings, NoisyEvaluation};
pub use experiments::{generate_data, run_recipe, ExperimentOutput, Recipe, Table};
pub use kfold::{kfold_split, Fold};
pub use report::{format_g9, MetricsRow};
pub use standardize::{standardize, TransformRecord};
