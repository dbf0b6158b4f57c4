use std::collections::BTreeMap;
use std::path::Path;

use noisy_ensemble::harness::{format_g9, kfold_split, load_or_generate_dataset, standardize, ExperimentConfig};
use noisy_ensemble::mse::bem_weights;
use noisy_ensemble::trees::fit_bagging;
use noisy_ensemble::Predictor;
use noisy_ensemble_cli::{command, run, EXIT_CONFIG, FLAGS};

fn run_args(args: &[&str]) -> i32 {
    run(std::iter::once("noisy-ens").chain(args.iter().copied()))
}

fn read_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    reader
        .records()
        .map(|r| header.iter().cloned().zip(r.unwrap().iter().map(String::from)).collect())
        .collect()
}

#[test]
fn every_subcommand_documents_exactly_the_registered_flags() {
    let mut root = command();
    let subs: Vec<String> = root.get_subcommands().map(|s| s.get_name().to_string()).collect();
    assert_eq!(subs.len(), 7);
    for name in subs {
        let sub = root.find_subcommand_mut(&name).unwrap();
        let mut longs: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).filter(|l| *l != "help").collect();
        longs.sort_unstable();
        let mut expected = FLAGS.to_vec();
        expected.sort_unstable();
        assert_eq!(longs, expected, "{name}");
        for arg in sub.get_arguments().filter(|a| a.get_long() != Some("help")) {
            let help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
            assert!(!help.trim().is_empty(), "{name} --{} lacks help", arg.get_long().unwrap());
        }
        let rendered = sub.render_long_help().to_string();
        for flag in FLAGS {
            assert!(rendered.contains(&format!("--{flag}")), "{name} help omits --{flag}");
        }
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(run_args(&["eval", "--no-such-flag", "1"]), 2);
    assert_eq!(run_args(&["eval", "--snr-db", "0:0:3", "--out", out]), EXIT_CONFIG);
    assert_eq!(run_args(&["eval", "--methods", "gem,bogus", "--out", out]), EXIT_CONFIG);
    assert_eq!(run_args(&["eval", "--profile", "loud", "--out", out]), EXIT_CONFIG);
    assert_eq!(run_args(&["eval", "--dataset", "/no/such/file.csv", "--out", out]), EXIT_CONFIG);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"snr_dbb\": [0]}").unwrap();
    assert_eq!(run_args(&["eval", "--config", bad.to_str().unwrap(), "--out", out]), EXIT_CONFIG);
    std::fs::write(&bad, "{\"k\": 5,\n \"seed\": }").unwrap();
    assert_eq!(run_args(&["eval", "--config", bad.to_str().unwrap(), "--out", out]), EXIT_CONFIG);
}

#[test]
fn minimal_config_file_gets_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n_samples": 120, "snr_db": "-12:6:0", "methods": ["bem"], "realizations": 3}"#).unwrap();
    let out = dir.path().join("o");
    let code = run_args(&["eval", "--config", cfg.to_str().unwrap(), "--k", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let resolved: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved.k, 3);
    assert_eq!(resolved.n_samples, 120);
    assert_eq!(resolved.noisy_fraction, 1.0);
    assert_eq!(resolved.snr_db.values(), &[-12.0, -6.0, 0.0]);
    assert_eq!(read_rows(&out.join("results.csv")).len(), 3 * 3);
}

#[test]
fn bagging_sweep_has_one_row_per_method_snr_and_fold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let code = run_args(&[
        "bagging-sweep-snr", "--dataset", "sine", "--methods", "gem,tem", "--profile", "noisier-subset:m=2,a=20",
        "--snr-db", "-12:3:18", "--k", "5", "--realizations", "100", "--seed", "7", "--n-trees", "8",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = read_rows(&out.join("results.csv"));
    assert_eq!(rows.len(), 2 * 11 * 5);
    assert_eq!(read_rows(&out.join("summary.csv")).len(), 11);
}

#[test]
fn noiseless_bem_eval_equals_direct_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let code = run_args(&[
        "eval", "--methods", "bem", "--profile", "noiseless", "--snr-db", "0", "--n-samples", "300", "--k", "3",
        "--n-trees", "6", "--realizations", "5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let config: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let rows = read_rows(&out.join("results.csv"));

    let (data, _) = standardize(&load_or_generate_dataset(&config.dataset_spec()).unwrap()).unwrap();
    let folds = kfold_split(data.n_samples(), config.k, config.seed).unwrap();
    for (i, fold) in folds.iter().enumerate() {
        let train = data.subset(&fold.train).unwrap();
        let test = data.subset(&fold.test).unwrap();
        let ensemble = fit_bagging(&train, &config.bagging(i)).unwrap();
        let w = bem_weights(ensemble.len()).unwrap();
        let pred = ensemble.prediction_matrix(&test).unwrap().aggregate(w.alpha()).unwrap();
        let err = pred - test.targets();
        let rmse = (err.norm_squared() / err.len() as f64).sqrt();
        let mae = err.abs().sum() / err.len() as f64;
        let row = &rows[i];
        assert_eq!(row["fold"], i.to_string());
        assert_eq!(row["rmse"], format_g9(rmse));
        assert_eq!(row["mae"], format_g9(mae));
        assert_eq!(row["rmse_se"], "0");
    }
}

#[test]
fn tem_lambda_sweep_has_interior_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lambda");
    let code = run_args(&[
        "tem-lambda-sweep", "--noisy-fraction", "0.5", "--snr-db", "-6", "--lambda", "0:0.1:1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut mse: BTreeMap<String, f64> = BTreeMap::new();
    for row in read_rows(&out.join("results.csv")) {
        if let Some(l) = row["method"].strip_prefix("tem@lambda=") {
            let r: f64 = row["rmse"].parse().unwrap();
            *mse.entry(l.to_string()).or_default() += r * r;
        }
    }
    assert_eq!(mse.len(), 11);
    let (best, _) = mse.iter().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let best: f64 = best.parse().unwrap();
    assert!(best > 0.0 && best < 1.0, "argmin lambda {best}");
}
