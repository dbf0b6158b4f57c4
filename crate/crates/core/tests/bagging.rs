use noisy_ensemble::harness::{kfold_split, load_or_generate_dataset, standardize, DatasetSpec};
use noisy_ensemble::mse::{bem_weights, expected_mse, gem_weights, tem_weights};
use noisy_ensemble::noise::{build_noise_profile, NoiseProfileSpec, ProfileKind};
use noisy_ensemble::trees::{fit_bagging, BaggingConfig};
use noisy_ensemble::{NoiseModel, Predictor};

fn sine() -> noisy_ensemble::Dataset {
    let spec = DatasetSpec::Sine {
        n_samples: 600,
        noise_std: 0.1,
        seed: 3,
    };
    standardize(&load_or_generate_dataset(&spec).unwrap()).unwrap().0
}

#[test]
fn bagged_average_beats_the_average_single_tree() {
    let data = sine();
    let fold = &kfold_split(data.n_samples(), 5, 3).unwrap()[0];
    let (train, test) = (data.subset(&fold.train).unwrap(), data.subset(&fold.test).unwrap());
    let config = BaggingConfig {
        n_trees: 32,
        max_depth: 4,
        ..BaggingConfig::default()
    };
    let ensemble = fit_bagging(&train, &config).unwrap();
    let phi = ensemble.prediction_matrix(&test).unwrap();
    let y = test.targets();
    let zero = NoiseModel::zeros(32);
    let bagged = expected_mse(&bem_weights(32).unwrap(), &phi, y, &zero, 1.0).unwrap().total;
    let single: f64 = (0..32)
        .map(|j| {
            let e = phi.values().column(j) - y;
            e.norm_squared() / y.len() as f64
        })
        .sum::<f64>()
        / 32.0;
    assert!(bagged < single, "bagged {bagged} vs single {single}");
}

#[test]
fn tem_has_lowest_expected_training_loss_under_noise() {
    let data = sine();
    let config = BaggingConfig {
        n_trees: 16,
        max_depth: 4,
        ..BaggingConfig::default()
    };
    let ensemble = fit_bagging(&data, &config).unwrap();
    let phi = ensemble.prediction_matrix(&data).unwrap();
    let y = data.targets();
    for kind in [ProfileKind::EquiVariance, ProfileKind::NoisierSubset { m: 2, a: 20.0 }] {
        let sigma = build_noise_profile(&NoiseProfileSpec::from_db(kind, -6.0), 16).unwrap();
        let loss = |w| expected_mse(&w, &phi, y, &sigma, 1.0).unwrap().total;
        let tem = loss(tem_weights(&phi, y, &sigma, 1.0).unwrap());
        assert!(tem <= loss(bem_weights(16).unwrap()) + 1e-12, "{kind}");
        assert!(tem <= loss(gem_weights(&phi, y).unwrap()) + 1e-12, "{kind}");
    }
}
