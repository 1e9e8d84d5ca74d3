//! Neural building blocks: B-spline bases, spline convolution, graph
//! attention, the GCN baseline, pooling, the MLP head and the loss.

mod bspline;
mod gat;
mod gcn;
mod head;
mod spline_conv;

pub use bspline::bspline_basis;
pub use gat::{gat_forward, AttentionStructure, GatLayer, GatOutput, GatVars, HeadCombine};
pub use gcn::{gcn_forward, GcnStructure};
pub use head::{global_mean_pool, mlp_forward, softmax_cross_entropy, MlpHead};
pub use spline_conv::{spline_conv_forward, SplineConvVars, SplineKernel, SplineStructure};

/// Default LeakyReLU slope for attention logits.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
