//! Position-aware graph learning for whole-slide-image patch graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`graphio`]: patch-graph data model, kNN edges, pseudo-coordinates,
//!   on-disk formats and the synthetic planted-region generator.
//! - [`autograd`]: dense tensors and a reverse-mode tape with a
//!   finite-difference checker.
//! - [`layers`]: B-spline bases, spline convolution, graph attention, GCN,
//!   pooling, MLP head and cross-entropy.
//! - [`train`]: model assembly, AdamW, the mini-batch loop and checkpoints.
//! - [`explain`]: graph Grad-CAM node saliency and heatmap rendering.
//! - [`metrics`]: confusion matrices, Cohen's kappa and accuracy.

pub mod autograd;
pub mod error;
pub mod explain;
pub mod graphio;
pub mod layers;
pub mod metrics;
pub mod parallel;
pub mod train;

pub use autograd::{finite_diff_check, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use explain::{gradcam, render_heatmap, NodeSaliency};
pub use graphio::{Dataset, PatchGraph, PseudoCoords, Split, SynthConfig};
pub use metrics::{ConfusionMatrix, EvalReport, Weighting};
pub use train::{Checkpoint, Model, ModelConfig, ModelParams, TrainConfig, Variant};
