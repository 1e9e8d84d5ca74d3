//! Benchmark fixtures shared by the criterion targets in `benches/`.

use pathgraph_core::graphio::synth_dataset;
use pathgraph_core::{Model, ModelConfig, PatchGraph, SynthConfig, Variant};

/// One planted-region graph on a `side × side` grid with `dim` features.
pub fn grid_graph(side: usize, dim: usize) -> PatchGraph {
    let ds = synth_dataset(&SynthConfig {
        num_graphs: 1,
        feature_dim: dim,
        grid_w: side,
        grid_h: side,
        ..SynthConfig::default()
    })
    .expect("valid synth config");
    ds.graphs.into_iter().next().expect("one graph")
}

/// Default-width model of the given variant.
pub fn default_model(variant: Variant, d_in: usize, classes: usize) -> Model {
    Model::build(ModelConfig {
        variant,
        ..ModelConfig::new(d_in, classes)
    })
    .expect("valid default config")
}
