//! Builders for benchmark scenes at the default experiment scale: the
//! rotated-blob target split, a matching model, and a filled memory bank.

use sfadapt_core::data::Dataset;
use sfadapt_core::harness::{ExperimentConfig, STREAM_HARNESS};
use sfadapt_core::model::Model;
use sfadapt_core::numkit::{softmax, Rng, Simplex};
use sfadapt_core::pseudo::{init_banks, MemoryBank};

/// Target train split, untrained default model, and full bank for seed 0 of
/// the default config.
pub fn default_scene() -> (ExperimentConfig, Dataset, Model, MemoryBank) {
    let config = ExperimentConfig::default();
    let mut shift = config.shift.clone();
    shift.seed = 0;
    let (_, target) = sfadapt_core::data::generate_shift_pair(&shift).expect("generate");
    let mut base = Rng::with_stream(0, STREAM_HARNESS);
    let (train, _) = target
        .split_train_test(config.test_fraction, &mut base.fork(0))
        .expect("split");
    let model = Model::new(
        train.input_dim(),
        &config.model.hidden,
        config.model.feature_dim,
        train.num_classes(),
        config.model.classifier_bias,
        &mut base.fork(1),
    )
    .expect("model");
    let bank = init_banks(&train.unlabeled(), &model, config.adapt.batch_size).expect("banks");
    (config, train, model, bank)
}

/// `n` random rows on the `k`-simplex.
pub fn random_simplexes(rng: &mut Rng, n: usize, k: usize) -> Vec<Simplex> {
    (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.normal()).collect();
            softmax(&logits).expect("softmax")
        })
        .collect()
}
