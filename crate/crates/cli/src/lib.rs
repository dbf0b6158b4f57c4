//! Command-line front end: flag parsing, config resolution and output layout.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use noisy_ensemble::harness::config::{config_from_json_over, merge_json, parse_grid};
use noisy_ensemble::harness::{generate_data, run_recipe, write_csv, ExperimentConfig, Recipe};
use noisy_ensemble::noise::ProfileKind;
use noisy_ensemble::{Error, Method};
use serde_json::{json, Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "NE_OUTPUT_DIR";

/// Long flags every subcommand accepts. The registry test checks this list against
/// the parser and the rendered help.
pub const FLAGS: &[&str] = &[
    "config",
    "out",
    "threads",
    "dataset",
    "n-samples",
    "measurement-noise-std",
    "hyperplane-dim",
    "methods",
    "profile",
    "snr-db",
    "eps-y",
    "k",
    "realizations",
    "noisy-fraction",
    "lambda",
    "t-grid",
    "n-trees",
    "sample-fraction",
    "max-depth",
    "min-leaf",
    "gb-loss",
    "bound-mode",
    "gd-eta",
    "gd-gamma",
    "gd-i-min",
    "gd-i-max",
    "gd-tau",
    "gd-eps",
    "seed",
    "standardize",
    "standardize-per-fold",
];

#[derive(Debug, Parser)]
#[command(name = "noisy-ens", version, about = "Noise-robust ensemble regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or load) the configured dataset and write it as data.csv
    GenData(Flags),
    /// Bagging aggregators over an SNR grid, plus the TEM-over-GEM MSE reduction
    BaggingSweepSnr(Flags),
    /// TEM over a lambda grid with partially noisy inference
    TemLambdaSweep(Flags),
    /// MAE descent weights and the analytic bounds on the optimal expected MAE
    MaeBounds(Flags),
    /// Plain and noise-robust gradient boosting over an ensemble-size grid
    GbSizeSweep(Flags),
    /// Noisy and noiseless predictions of a small ensemble on one fold
    DemoMotivation(Flags),
    /// Evaluate the configured methods over folds and the SNR grid
    Eval(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::BaggingSweepSnr(_) => "bagging-sweep-snr",
            Command::TemLambdaSweep(_) => "tem-lambda-sweep",
            Command::MaeBounds(_) => "mae-bounds",
            Command::GbSizeSweep(_) => "gb-size-sweep",
            Command::DemoMotivation(_) => "demo-motivation",
            Command::Eval(_) => "eval",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::GenData(f)
            | Command::BaggingSweepSnr(f)
            | Command::TemLambdaSweep(f)
            | Command::MaeBounds(f)
            | Command::GbSizeSweep(f)
            | Command::DemoMotivation(f)
            | Command::Eval(f) => f,
        }
    }

    fn recipe(&self) -> Option<Recipe> {
        match self {
            Command::GenData(_) => None,
            Command::BaggingSweepSnr(_) => Some(Recipe::BaggingSweepSnr),
            Command::TemLambdaSweep(_) => Some(Recipe::TemLambdaSweep),
            Command::MaeBounds(_) => Some(Recipe::MaeBounds),
            Command::GbSizeSweep(_) => Some(Recipe::GbSizeSweep),
            Command::DemoMotivation(_) => Some(Recipe::DemoMotivation),
            Command::Eval(_) => Some(Recipe::Eval),
        }
    }
}

/// Flags shared by all subcommands; each overrides the matching config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON config file; flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [default: $NE_OUTPUT_DIR/<subcommand> or ./results/<subcommand>]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Maximum worker threads
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// `sine`, `hyperplane`, or a CSV path whose last column is the target
    #[arg(long)]
    pub dataset: Option<String>,
    /// Synthetic dataset size
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Standard deviation of the synthetic measurement noise
    #[arg(long)]
    pub measurement_noise_std: Option<f64>,
    /// Input dimension of the hyperplane dataset
    #[arg(long)]
    pub hyperplane_dim: Option<usize>,
    /// Comma list of bem, gem, tem, mae-gd, mae-gd-nonrobust, gb, rgb
    #[arg(long)]
    pub methods: Option<String>,
    /// Channel noise profile, e.g. equi-variance, noisier-subset:m=2,a=20, single-noisy:a=20, noiseless
    #[arg(long)]
    pub profile: Option<String>,
    /// SNR grid in dB: start:step:stop, comma list, or one value
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<String>,
    /// Normalized target energy used to scale the noise profiles
    #[arg(long)]
    pub eps_y: Option<f64>,
    /// Number of cross-validation folds
    #[arg(long)]
    pub k: Option<usize>,
    /// Noise realizations per fold and SNR point
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Fraction of test rows that receive channel noise
    #[arg(long)]
    pub noisy_fraction: Option<f64>,
    /// TEM lambda grid
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Boosting ensemble sizes
    #[arg(long)]
    pub t_grid: Option<String>,
    /// Ensemble size for bagging (and boosting outside the size sweep)
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Bagging subsample fraction
    #[arg(long)]
    pub sample_fraction: Option<f64>,
    /// Maximum tree depth
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Minimum rows per leaf
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Boosting loss: mse or mae
    #[arg(long)]
    pub gb_loss: Option<String>,
    /// MAE upper bound: generic, bem, mineig, combined
    #[arg(long)]
    pub bound_mode: Option<String>,
    /// Descent step size
    #[arg(long)]
    pub gd_eta: Option<f64>,
    /// Descent momentum
    #[arg(long)]
    pub gd_gamma: Option<f64>,
    /// Minimum descent iterations
    #[arg(long)]
    pub gd_i_min: Option<usize>,
    /// Maximum descent iterations
    #[arg(long)]
    pub gd_i_max: Option<usize>,
    /// Descent stopping tolerance on the objective change
    #[arg(long)]
    pub gd_tau: Option<f64>,
    /// Descent accumulator regularizer
    #[arg(long)]
    pub gd_eps: Option<f64>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Standardize features and targets (true/false)
    #[arg(long, value_name = "BOOL")]
    pub standardize: Option<bool>,
    /// Fit standardization on each training split (true/false)
    #[arg(long, value_name = "BOOL")]
    pub standardize_per_fold: Option<bool>,
}

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn flag_error(flag: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("--{flag}: {e}"))
}

fn grid_value(flag: &str, text: &str) -> Result<Value, CliError> {
    parse_grid(text).map(|g| json!(g)).map_err(|e| flag_error(flag, e))
}

/// JSON patch holding only the flags that were given.
pub fn flags_to_json(flags: &Flags) -> Result<Value, CliError> {
    let mut top = Map::new();
    let mut tree = Map::new();
    let mut gd = Map::new();
    macro_rules! put {
        ($map:ident, $key:literal, $field:expr) => {
            if let Some(v) = &$field {
                $map.insert($key.into(), json!(v));
            }
        };
    }
    put!(top, "dataset", flags.dataset);
    put!(top, "n_samples", flags.n_samples);
    put!(top, "measurement_noise_std", flags.measurement_noise_std);
    put!(top, "hyperplane_dim", flags.hyperplane_dim);
    if let Some(m) = &flags.methods {
        let methods = m
            .split(',')
            .map(|s| s.trim().parse::<Method>().map(|m| m.as_str()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| flag_error("methods", e))?;
        top.insert("methods".into(), json!(methods));
    }
    if let Some(p) = &flags.profile {
        let kind: ProfileKind = p.parse().map_err(|e| flag_error("profile", e))?;
        top.insert("profile".into(), json!(kind.to_string()));
    }
    if let Some(g) = &flags.snr_db {
        top.insert("snr_db".into(), grid_value("snr-db", g)?);
    }
    put!(top, "eps_y", flags.eps_y);
    put!(top, "k", flags.k);
    put!(top, "realizations", flags.realizations);
    put!(top, "noisy_fraction", flags.noisy_fraction);
    if let Some(g) = &flags.lambda {
        top.insert("lambda".into(), grid_value("lambda", g)?);
    }
    if let Some(g) = &flags.t_grid {
        top.insert("t_grid".into(), grid_value("t-grid", g)?);
    }
    put!(top, "n_trees", flags.n_trees);
    put!(top, "sample_fraction", flags.sample_fraction);
    put!(tree, "max_depth", flags.max_depth);
    put!(tree, "min_leaf", flags.min_leaf);
    if let Some(l) = &flags.gb_loss {
        let loss: noisy_ensemble::gradboost::Loss = l.parse().map_err(|e| flag_error("gb-loss", e))?;
        top.insert("gb_loss".into(), json!(loss.as_str()));
    }
    if let Some(b) = &flags.bound_mode {
        let mode: noisy_ensemble::mae::UpperBoundMode = b.parse().map_err(|e| flag_error("bound-mode", e))?;
        top.insert("bound_mode".into(), json!(mode.as_str()));
    }
    put!(gd, "eta", flags.gd_eta);
    put!(gd, "gamma", flags.gd_gamma);
    put!(gd, "i_min", flags.gd_i_min);
    put!(gd, "i_max", flags.gd_i_max);
    put!(gd, "tau", flags.gd_tau);
    put!(gd, "eps", flags.gd_eps);
    put!(top, "seed", flags.seed);
    put!(top, "standardize", flags.standardize);
    put!(top, "standardize_per_fold", flags.standardize_per_fold);
    if !tree.is_empty() {
        top.insert("tree".into(), Value::Object(tree));
    }
    if !gd.is_empty() {
        top.insert("gd".into(), Value::Object(gd));
    }
    Ok(Value::Object(top))
}

/// Subcommand defaults, then the config file, then the flags.
pub fn resolve_config(command: &Command) -> Result<ExperimentConfig, CliError> {
    let defaults = command.recipe().map(|r| r.default_config()).unwrap_or_default();
    let flags = command.flags();
    let mut patch = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| flag_error("config", format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| {
                CliError::Config(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
            })?
        }
        None => Value::Object(Map::new()),
    };
    if !patch.is_object() {
        return Err(CliError::Config("config file must hold a JSON object".into()));
    }
    merge_json(&mut patch, flags_to_json(flags)?);
    let origin = flags
        .config
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "flags".into());
    Ok(config_from_json_over(&patch.to_string(), &defaults, &origin)?)
}

pub fn output_dir(command: &Command) -> PathBuf {
    if let Some(out) = &command.flags().out {
        return out.clone();
    }
    let root = std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    root.join(command.name())
}

/// Runs one parsed invocation and writes its outputs plus `config.json`.
pub fn execute(command: &Command) -> Result<PathBuf, CliError> {
    let config = resolve_config(command)?;
    let dir = output_dir(command);
    let work = || -> Result<(), CliError> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| flag_error("out", format!("cannot create {}: {e}", dir.display())))?;
        match command.recipe() {
            None => write_csv(&generate_data(&config)?, &dir.join("data.csv"))?,
            Some(recipe) => run_recipe(recipe, &config)?.write(&dir)?,
        }
        write_config(&config, &dir)
    };
    match command.flags().threads {
        Some(0) => return Err(flag_error("threads", "must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| flag_error("threads", e))?
            .install(work)?,
        None => work()?,
    }
    Ok(dir)
}

fn write_config(config: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::write(dir.join("config.json"), config.to_json() + "\n")
        .map_err(|e| CliError::Config(format!("cannot write config.json: {e}")))
}

/// Parses `args` (program name first), runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(dir) => {
            log::info!("wrote {}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("noisy-ens {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

pub fn command() -> clap::Command {
    Cli::command()
}
