//! Graph Grad-CAM node saliency and heatmap rendering on the patch grid.

mod gradcam;
mod heatmap;

pub use gradcam::{gradcam, gradcam_from_tape, NodeSaliency};
pub use heatmap::{grid_cells, heatmap_csv, heatmap_ppm, render_heatmap, DEFAULT_CELL_PX};
