//! Agreement of predictors that carry no information about the label.

use pathgraph_core::graphio::synth_dataset;
use pathgraph_core::metrics::evaluate;
use pathgraph_core::{ConfusionMatrix, Model, ModelConfig, PatchGraph, SynthConfig, Weighting};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHANCE_BOUND: f64 = 0.15;

#[test]
fn uniform_guessing_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut sum = 0.0;
    let trials = 200;
    for _ in 0..trials {
        let mut cm = ConfusionMatrix::new(5);
        for _ in 0..500 {
            cm.add(rng.random_range(0..5), rng.random_range(0..5)).unwrap();
        }
        let k = cm.kappa(Weighting::Quadratic).unwrap();
        assert!(k.abs() < CHANCE_BOUND, "{k}");
        sum += k;
    }
    assert!((sum / trials as f64).abs() < 0.01);
}

#[test]
fn model_on_shuffled_labels_is_chance_level() {
    let ds = synth_dataset(&SynthConfig {
        num_graphs: 500,
        feature_dim: 8,
        grid_w: 6,
        grid_h: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    // labels no longer tied to the features
    let mut labels: Vec<usize> = ds.graphs.iter().map(|g| g.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let graphs: Vec<PatchGraph> = ds
        .graphs
        .iter()
        .zip(labels)
        .map(|(g, label)| PatchGraph { label, ..g.clone() })
        .collect();
    let refs: Vec<&PatchGraph> = graphs.iter().collect();
    let model = Model::build(ModelConfig::new(8, 5)).unwrap();
    let report = evaluate(&model, &refs, 1).unwrap();
    assert_eq!(report.n, 500);
    // a constant predictor has kappa exactly 0, which is also chance level
    let k = report.kappa_quadratic.unwrap_or(0.0);
    assert!(k.abs() < CHANCE_BOUND, "quadratic kappa {k}");
}
