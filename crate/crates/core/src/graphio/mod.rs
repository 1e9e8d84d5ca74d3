//! Patch-graph data model, edge construction, pseudo-coordinates, file
//! formats and the synthetic planted-region generator.

mod format;
mod graph;
mod knn;
mod pseudo;
mod synth;

pub use format::{
    decode_mask, encode_mask, f32_from_le_bytes, f32_to_le_bytes, graph_file_name, graph_to_json, load_dataset,
    load_graph, save_dataset, save_graph, FORMAT_VERSION,
};
pub use graph::{Dataset, PatchGraph, Split};
pub use knn::knn_build_edges;
pub use pseudo::{compute_pseudo_coords, PseudoCoords};
pub use synth::{split_tags, synth_dataset, SynthConfig, SIGNATURE_SHIFT};

/// Default neighbour count: a grid patch has eight surrounding patches.
pub const DEFAULT_K: usize = 8;

/// Side length in pixels of the patches the coordinates refer to.
pub const PATCH_SIZE_PX: usize = 256;
