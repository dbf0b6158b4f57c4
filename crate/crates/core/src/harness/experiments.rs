//! End-to-end experiment recipes over folds and SNR grids.
//!
//! Every task draws from RNG streams keyed by its coordinates, so results do not
//! depend on how rayon schedules the work. Rows are emitted in
//! `fold → SNR → method` order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradboost::{fit_gradboost, GradBoostModel};
use crate::harness::config::ExperimentConfig;
use crate::harness::data::load_or_generate_dataset;
use crate::harness::evaluate::{evaluate_noisy_matrix, mse_reduction, EvalSettings, NoisyEvaluation};
use crate::harness::kfold::kfold_split;
use crate::harness::report::{format_g9, write_expected_csv, write_metrics_csv, write_table, MetricsRow};
use crate::harness::standardize::{standardize, TransformRecord};
use crate::mae::{
    expected_mae, mae_lower_bound_with_source, mae_upper_bound_with_source, noiseless_mae,
    optimize_weights_gd, MaeGdConfig, UpperBoundMode,
};
use crate::mse::{bem_weights, gem_weights, tem_weights};
use crate::noise::{build_noise_profile, sample_noise, stream_rng, NoiseProfileSpec, ProfileKind};
use crate::trees::fit_bagging;
use crate::types::{AggregationWeights, Dataset, Method, NoiseModel, PredictionMatrix, Predictor};

const EVAL_TAG: u64 = 0xe7a1;
const DEMO_TAG: u64 = 0xde70;

/// The experiment recipes the command line exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Eval,
    BaggingSweepSnr,
    TemLambdaSweep,
    MaeBounds,
    GbSizeSweep,
    DemoMotivation,
}

impl Recipe {
    pub const ALL: [Recipe; 6] = [
        Recipe::Eval,
        Recipe::BaggingSweepSnr,
        Recipe::TemLambdaSweep,
        Recipe::MaeBounds,
        Recipe::GbSizeSweep,
        Recipe::DemoMotivation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Recipe::Eval => "eval",
            Recipe::BaggingSweepSnr => "bagging-sweep-snr",
            Recipe::TemLambdaSweep => "tem-lambda-sweep",
            Recipe::MaeBounds => "mae-bounds",
            Recipe::GbSizeSweep => "gb-size-sweep",
            Recipe::DemoMotivation => "demo-motivation",
        }
    }

    /// Library defaults adjusted for the recipe.
    pub fn default_config(&self) -> ExperimentConfig {
        let base = ExperimentConfig::default();
        match self {
            Recipe::Eval | Recipe::BaggingSweepSnr => base,
            Recipe::TemLambdaSweep => ExperimentConfig {
                methods: vec![Method::Gem, Method::Tem],
                snr_db: crate::harness::config::Grid(vec![-6.0]),
                lambda: crate::harness::config::Grid((0..=10).map(|i| i as f64 / 10.0).collect()),
                noisy_fraction: 0.5,
                ..base
            },
            Recipe::MaeBounds => ExperimentConfig {
                methods: vec![Method::MaeGd, Method::MaeGdNonRobust],
                n_trees: 8,
                ..base
            },
            Recipe::GbSizeSweep => ExperimentConfig {
                methods: vec![Method::Gb, Method::Rgb],
                profile: ProfileKind::EquiVariance,
                tree: crate::trees::TreeParams {
                    max_depth: 1,
                    min_leaf: 1,
                },
                ..base
            },
            Recipe::DemoMotivation => ExperimentConfig {
                methods: vec![Method::Bem, Method::Gem, Method::Tem],
                n_trees: 5,
                profile: ProfileKind::SingleNoisy { a: 20.0 },
                snr_db: crate::harness::config::Grid(vec![-6.0]),
                ..base
            },
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown recipe `{s}`")))
    }
}

/// An auxiliary CSV produced by a recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub tables: Vec<Table>,
}

impl ExperimentOutput {
    /// Writes `results.csv`, `expected.csv` and every auxiliary table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_metrics_csv(&self.rows, &dir.join("results.csv"))?;
        write_expected_csv(&self.rows, &dir.join("expected.csv"))?;
        for table in &self.tables {
            let header: Vec<&str> = table.header.iter().map(String::as_str).collect();
            write_table(&dir.join(&table.file_name), &header, &table.rows)?;
        }
        Ok(())
    }
}

pub fn run_recipe(recipe: Recipe, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let prepared = Prepared::new(config)?;
    match recipe {
        Recipe::Eval | Recipe::TemLambdaSweep => Ok(ExperimentOutput {
            rows: bagging_rows(&prepared)?.into_iter().flat_map(|f| f.rows).collect(),
            tables: vec![],
        }),
        Recipe::BaggingSweepSnr => bagging_sweep(&prepared),
        Recipe::MaeBounds => mae_bounds_recipe(&prepared),
        Recipe::GbSizeSweep => gb_size_sweep(&prepared),
        Recipe::DemoMotivation => demo_motivation(&prepared),
    }
}

/// The raw (unstandardized) dataset a config points at.
pub fn generate_data(config: &ExperimentConfig) -> Result<Dataset> {
    config.validate()?;
    load_or_generate_dataset(&config.dataset_spec())
}

struct Prepared<'a> {
    config: &'a ExperimentConfig,
    name: String,
    folds: Vec<(Dataset, Dataset)>,
}

impl<'a> Prepared<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let raw = load_or_generate_dataset(&config.dataset_spec())?;
        let name = raw.name().to_string();
        let data = if config.standardize && !config.standardize_per_fold {
            standardize(&raw)?.0
        } else {
            raw
        };
        let folds = kfold_split(data.n_samples(), config.k, config.seed)?
            .into_iter()
            .map(|f| {
                let (train, test) = (data.subset(&f.train)?, data.subset(&f.test)?);
                if config.standardize && config.standardize_per_fold {
                    let record = TransformRecord::fit(&train)?;
                    Ok((record.apply(&train)?, record.apply(&test)?))
                } else {
                    Ok((train, test))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, name, folds })
    }

    fn noise(&self, snr_db: f64, t: usize) -> Result<NoiseModel> {
        self.noise_with(self.config.profile, snr_db, t)
    }

    fn noise_with(&self, kind: ProfileKind, snr_db: f64, t: usize) -> Result<NoiseModel> {
        let spec = NoiseProfileSpec {
            eps_y: self.config.eps_y,
            ..NoiseProfileSpec::from_db(kind, snr_db)
        };
        build_noise_profile(&spec, t)
    }

    fn settings(&self, fold: usize, snr_idx: usize) -> EvalSettings {
        EvalSettings::new(
            self.config.realizations,
            self.config.noisy_fraction,
            self.config.seed,
            vec![EVAL_TAG, fold as u64, snr_idx as u64],
        )
    }

    fn row(&self, method: String, profile: String, snr_db: f64, fold: usize, e: &NoisyEvaluation) -> MetricsRow {
        MetricsRow {
            dataset: self.name.clone(),
            method,
            profile,
            snr_db,
            fold,
            rmse: e.rmse,
            mae: e.mae,
            rmse_se: e.rmse_se,
            mae_se: e.mae_se,
            expected_mse: Some(e.expected_mse),
            expected_mae: Some(e.expected_mae),
        }
    }

    fn tem_label(&self, lambda: f64) -> String {
        if self.config.lambda.values() == [1.0] {
            "tem".into()
        } else {
            format!("tem@lambda={}", format_g9(lambda))
        }
    }
}

/// Fitted ensemble and the noise-independent aggregators of one fold.
struct BaggedFold<'p> {
    train: &'p Dataset,
    test: &'p Dataset,
    phi_train: PredictionMatrix,
    phi_test: PredictionMatrix,
    gem: Option<AggregationWeights>,
    mae_non_robust: Option<AggregationWeights>,
}

impl<'p> BaggedFold<'p> {
    fn fit(prepared: &Prepared, fold: usize, train: &'p Dataset, test: &'p Dataset) -> Result<Self> {
        let config = prepared.config;
        let ensemble = fit_bagging(train, &config.bagging(fold))?;
        let phi_train = ensemble.prediction_matrix(train)?;
        let phi_test = ensemble.prediction_matrix(test)?;
        let gem = if config.methods.contains(&Method::Gem) {
            Some(gem_weights(&phi_train, train.targets())?)
        } else {
            None
        };
        let mae_non_robust = if config.methods.contains(&Method::MaeGdNonRobust) {
            let t = phi_train.n_regressors();
            let gd = MaeGdConfig { robust: false, ..config.gd };
            let w = optimize_weights_gd(&phi_train, train.targets(), &NoiseModel::zeros(t), &gd)?;
            Some(AggregationWeights::new(w.alpha().clone(), Method::MaeGdNonRobust)?)
        } else {
            None
        };
        Ok(Self {
            train,
            test,
            phi_train,
            phi_test,
            gem,
            mae_non_robust,
        })
    }

    /// `(label, weights)` for every configured bagging aggregator at this noise level.
    fn weights(&self, prepared: &Prepared, sigma: &NoiseModel) -> Result<Vec<(String, AggregationWeights)>> {
        let config = prepared.config;
        let y = self.train.targets();
        let t = self.phi_train.n_regressors();
        let mut out = Vec::new();
        for &method in &config.methods {
            match method {
                Method::Bem => out.push((method.to_string(), bem_weights(t)?)),
                Method::Gem => out.push((method.to_string(), self.gem.clone().expect("gem fitted"))),
                Method::Tem => {
                    for &lambda in config.lambda.values() {
                        out.push((prepared.tem_label(lambda), tem_weights(&self.phi_train, y, sigma, lambda)?));
                    }
                }
                Method::MaeGd => {
                    let gd = MaeGdConfig { robust: true, ..config.gd };
                    let w = optimize_weights_gd(&self.phi_train, y, sigma, &gd)?;
                    out.push((method.to_string(), w));
                }
                Method::MaeGdNonRobust => {
                    out.push((method.to_string(), self.mae_non_robust.clone().expect("non-robust fitted")))
                }
                Method::Gb | Method::Rgb => {}
            }
        }
        Ok(out)
    }
}

struct FoldRows {
    rows: Vec<MetricsRow>,
    /// Noiseless test MSE of GEM, when GEM is configured.
    gem_noiseless_mse: Option<f64>,
}

fn boosted_rows(
    prepared: &Prepared,
    fold: usize,
    train: &Dataset,
    test: &Dataset,
    t: usize,
    label_t: bool,
    non_robust: Option<&GradBoostModel>,
) -> Result<Vec<Vec<MetricsRow>>> {
    let config = prepared.config;
    let snrs = config.snr_db.values();
    snrs.par_iter()
        .enumerate()
        .map(|(s, &db)| {
            let sigma = prepared.noise(db, t)?;
            let mut rows = Vec::new();
            for &method in &config.methods {
                let model = match method {
                    Method::Gb => match non_robust {
                        Some(m) => m.truncated(t)?,
                        None => fit_gradboost(train, t, &sigma, config.gb_loss, config.tree, false)?,
                    },
                    Method::Rgb => fit_gradboost(train, t, &sigma, config.gb_loss, config.tree, true)?,
                    _ => continue,
                };
                let phi = model.prediction_matrix(test)?;
                let e = evaluate_noisy_matrix(&phi, test.targets(), &model.weights()?, &sigma, &prepared.settings(fold, s))?;
                let label = if label_t { format!("{method}@T={t}") } else { method.to_string() };
                rows.push(prepared.row(label, config.profile.to_string(), db, fold, &e));
            }
            Ok(rows)
        })
        .collect()
}

fn needs_bagging(config: &ExperimentConfig) -> bool {
    config.methods.iter().any(|m| !matches!(m, Method::Gb | Method::Rgb))
}

fn needs_boosting(config: &ExperimentConfig) -> bool {
    config.methods.iter().any(|m| matches!(m, Method::Gb | Method::Rgb))
}

fn bagging_rows(prepared: &Prepared) -> Result<Vec<FoldRows>> {
    let config = prepared.config;
    prepared
        .folds
        .par_iter()
        .enumerate()
        .map(|(fold, (train, test))| {
            let snrs = config.snr_db.values();
            let mut per_snr: Vec<Vec<MetricsRow>> = vec![Vec::new(); snrs.len()];
            let mut gem_noiseless_mse = None;
            if needs_bagging(config) {
                let bf = BaggedFold::fit(prepared, fold, train, test)?;
                if let Some(gem) = &bf.gem {
                    let resid = bf.phi_test.aggregate(gem.alpha())? - test.targets();
                    gem_noiseless_mse = Some(resid.norm_squared() / test.n_samples() as f64);
                }
                let t = bf.phi_train.n_regressors();
                let blocks: Vec<Vec<MetricsRow>> = snrs
                    .par_iter()
                    .enumerate()
                    .map(|(s, &db)| {
                        let sigma = prepared.noise(db, t)?;
                        let settings = prepared.settings(fold, s);
                        bf.weights(prepared, &sigma)?
                            .into_iter()
                            .map(|(label, w)| {
                                let e = evaluate_noisy_matrix(&bf.phi_test, bf.test.targets(), &w, &sigma, &settings)?;
                                Ok(prepared.row(label, config.profile.to_string(), db, fold, &e))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                for (slot, block) in per_snr.iter_mut().zip(blocks) {
                    slot.extend(block);
                }
            }
            if needs_boosting(config) {
                let t = config.n_trees;
                let blocks = boosted_rows(prepared, fold, train, test, t, false, None)?;
                for (slot, block) in per_snr.iter_mut().zip(blocks) {
                    slot.extend(block);
                }
            }
            Ok(FoldRows {
                rows: per_snr.into_iter().flatten().collect(),
                gem_noiseless_mse,
            })
        })
        .collect()
}

/// Pooled RMSE `√(mean_f MSE_f)`.
fn pooled_rmse<'r>(rows: impl Iterator<Item = &'r MetricsRow>) -> Option<f64> {
    let mses: Vec<f64> = rows.map(|r| r.rmse * r.rmse).collect();
    if mses.is_empty() {
        None
    } else {
        Some((mses.iter().sum::<f64>() / mses.len() as f64).sqrt())
    }
}

fn bagging_sweep(prepared: &Prepared) -> Result<ExperimentOutput> {
    let config = prepared.config;
    let folds = bagging_rows(prepared)?;
    let gem_clean: Vec<f64> = folds.iter().filter_map(|f| f.gem_noiseless_mse).collect();
    let rows: Vec<MetricsRow> = folds.into_iter().flat_map(|f| f.rows).collect();
    let mut summary = Vec::new();
    if gem_clean.len() == prepared.folds.len() && config.methods.contains(&Method::Tem) {
        let gem_noiseless = (gem_clean.iter().sum::<f64>() / gem_clean.len() as f64).sqrt();
        for &db in config.snr_db.values() {
            let at = |label: &str| pooled_rmse(rows.iter().filter(|r| r.snr_db == db && r.method == label));
            let gem = at("gem").expect("gem rows present");
            for &lambda in config.lambda.values() {
                let label = prepared.tem_label(lambda);
                let tem = at(&label).expect("tem rows present");
                let gain = mse_reduction(gem, tem, gem_noiseless)?;
                summary.push(vec![
                    prepared.name.clone(),
                    config.profile.to_string(),
                    format_g9(db),
                    label,
                    format_g9(gem),
                    format_g9(tem),
                    format_g9(gem_noiseless),
                    format_g9(gain),
                ]);
            }
        }
    } else {
        log::warn!("summary.csv needs both gem and tem; skipping the MSE-reduction table");
    }
    let header = [
        "dataset", "profile", "snr_db", "method", "gem_rmse", "tem_rmse", "gem_noiseless_rmse", "mse_reduction_pct",
    ];
    Ok(ExperimentOutput {
        rows,
        tables: vec![Table {
            file_name: "summary.csv".into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: summary,
        }],
    })
}

fn mae_bounds_recipe(prepared: &Prepared) -> Result<ExperimentOutput> {
    let config = prepared.config;
    let per_fold: Vec<(Vec<MetricsRow>, Vec<Vec<String>>)> = prepared
        .folds
        .par_iter()
        .enumerate()
        .map(|(fold, (train, test))| {
            let ensemble = fit_bagging(train, &config.bagging(fold))?;
            let phi_train = ensemble.prediction_matrix(train)?;
            let phi_test = ensemble.prediction_matrix(test)?;
            let y = train.targets();
            let t = phi_train.n_regressors();
            let clean_gd = MaeGdConfig { robust: false, ..config.gd };
            let dagger = optimize_weights_gd(&phi_train, y, &NoiseModel::zeros(t), &clean_gd)?;
            let dagger = AggregationWeights::new(dagger.alpha().clone(), Method::MaeGdNonRobust)?;
            let blocks: Vec<(Vec<MetricsRow>, Vec<String>)> = config
                .snr_db
                .values()
                .par_iter()
                .enumerate()
                .map(|(s, &db)| {
                    let sigma = prepared.noise(db, t)?;
                    let robust = optimize_weights_gd(&phi_train, y, &sigma, &MaeGdConfig { robust: true, ..config.gd })?;
                    let (lower, lower_src) = mae_lower_bound_with_source(&phi_train, y, &sigma, dagger.alpha())?;
                    let generic_at = (config.bound_mode == UpperBoundMode::Generic).then_some(dagger.alpha());
                    let (upper, upper_src) =
                        mae_upper_bound_with_source(&phi_train, y, &sigma, config.bound_mode, generic_at)?;
                    let optimized = expected_mae(robust.alpha(), &phi_train, y, &sigma)?;
                    let noiseless = noiseless_mae(dagger.alpha(), &phi_train, y)?;
                    let bound_row = vec![
                        prepared.name.clone(),
                        config.profile.to_string(),
                        format_g9(db),
                        fold.to_string(),
                        format_g9(lower),
                        format_g9(upper),
                        serde_label(&lower_src),
                        serde_label(&upper_src),
                        format_g9(optimized),
                        format_g9(noiseless),
                    ];
                    let settings = prepared.settings(fold, s);
                    let mut rows = Vec::new();
                    for &method in &config.methods {
                        let w = match method {
                            Method::MaeGd => &robust,
                            Method::MaeGdNonRobust => &dagger,
                            _ => continue,
                        };
                        let e = evaluate_noisy_matrix(&phi_test, test.targets(), w, &sigma, &settings)?;
                        rows.push(prepared.row(method.to_string(), config.profile.to_string(), db, fold, &e));
                    }
                    Ok((rows, bound_row))
                })
                .collect::<Result<_>>()?;
            let (rows, bounds): (Vec<Vec<MetricsRow>>, Vec<Vec<String>>) = blocks.into_iter().unzip();
            Ok((rows.into_iter().flatten().collect(), bounds))
        })
        .collect::<Result<_>>()?;
    let (rows, bounds): (Vec<Vec<MetricsRow>>, Vec<Vec<Vec<String>>>) = per_fold.into_iter().unzip();
    let header = [
        "dataset", "profile", "snr_db", "fold", "lower", "upper", "lower_source", "upper_source", "optimized", "noiseless",
    ];
    Ok(ExperimentOutput {
        rows: rows.into_iter().flatten().collect(),
        tables: vec![Table {
            file_name: "bounds.csv".into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: bounds.into_iter().flatten().collect(),
        }],
    })
}

fn serde_label<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn gb_size_sweep(prepared: &Prepared) -> Result<ExperimentOutput> {
    let config = prepared.config;
    let ts = config.t_values();
    let t_max = *ts.iter().max().expect("validated non-empty");
    let per_fold: Vec<Vec<MetricsRow>> = prepared
        .folds
        .par_iter()
        .enumerate()
        .map(|(fold, (train, test))| {
            // the non-robust stage coefficients do not depend on the horizon, so one
            // fit truncated to each T serves the whole grid
            let non_robust = if config.methods.contains(&Method::Gb) {
                Some(fit_gradboost(train, t_max, &NoiseModel::zeros(t_max), config.gb_loss, config.tree, false)?)
            } else {
                None
            };
            let mut rows = Vec::new();
            for &t in &ts {
                let blocks = boosted_rows(prepared, fold, train, test, t, true, non_robust.as_ref())?;
                rows.push(blocks);
            }
            // reorder from T → SNR → method to SNR → T → method
            let n_snr = config.snr_db.values().len();
            let mut out = Vec::new();
            for s in 0..n_snr {
                for per_t in &rows {
                    out.extend(per_t[s].iter().cloned());
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentOutput {
        rows: per_fold.into_iter().flatten().collect(),
        tables: vec![],
    })
}

fn demo_motivation(prepared: &Prepared) -> Result<ExperimentOutput> {
    let config = prepared.config;
    let (train, test) = &prepared.folds[0];
    let bf = BaggedFold::fit(prepared, 0, train, test)?;
    let t = bf.phi_train.n_regressors();
    let db = config.snr_db.values()[0];
    let sigma = prepared.noise(db, t)?;
    let clean_sigma = prepared.noise_with(ProfileKind::Noiseless, db, t)?;
    let settings = prepared.settings(0, 0);
    let weights = bf.weights(prepared, &sigma)?;

    let mut rows = Vec::new();
    for (label, w) in &weights {
        let e = evaluate_noisy_matrix(&bf.phi_test, test.targets(), w, &sigma, &settings)?;
        rows.push(prepared.row(label.clone(), config.profile.to_string(), db, 0, &e));
        let e = evaluate_noisy_matrix(&bf.phi_test, test.targets(), w, &clean_sigma, &settings)?;
        rows.push(prepared.row(label.clone(), ProfileKind::Noiseless.to_string(), db, 0, &e));
    }

    // one shared channel-noise draw per test row, so every method sees the same noise
    let mut rng = stream_rng(config.seed, &[DEMO_TAG]);
    let draws: Vec<DVector<f64>> = (0..test.n_samples()).map(|_| sample_noise(&sigma, &mut rng)).collect();
    let mut header: Vec<String> = (0..test.n_features()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    for (label, _) in &weights {
        header.push(label.clone());
        header.push(format!("{label}_noisy"));
    }
    let phi = bf.phi_test.values();
    let mut table = Vec::with_capacity(test.n_samples());
    for i in 0..test.n_samples() {
        let mut rec: Vec<String> = test.row(i).into_iter().map(format_g9).collect();
        rec.push(format_g9(test.targets()[i]));
        for (_, w) in &weights {
            let clean: f64 = phi.row(i).iter().zip(w.alpha().iter()).map(|(p, a)| p * a).sum();
            let noise = w.alpha().dot(&draws[i]);
            rec.push(format_g9(clean));
            rec.push(format_g9(clean + noise));
        }
        table.push(rec);
    }
    Ok(ExperimentOutput {
        rows,
        tables: vec![Table {
            file_name: "predictions.csv".into(),
            header,
            rows: table,
        }],
    })
}
