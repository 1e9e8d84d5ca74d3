use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graphio::PatchGraph;
use crate::train::Model;

/// Per-node class saliency at one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSaliency {
    pub graph_id: String,
    pub class: usize,
    pub layer: String,
    /// `ReLU(Σ_k α_k x[n, k])`, one per node, never negative.
    pub scores: Vec<f64>,
    /// `scores / max`, or all zeros when `max` is 0.
    pub normalized: Vec<f64>,
    pub max: f64,
}

/// Grad-CAM weighting on an existing tape: `score` must be a 1×1 node that
/// depends on `activation` (N × K), whose gradient has to be retained before
/// calling this. Channel weights are the node-averaged gradients.
pub fn gradcam_from_tape(tape: &mut Tape, activation: Var, score: Var) -> Result<Vec<f64>> {
    tape.backward(score)?;
    let x = tape.value(activation);
    let grad = tape.grad(activation);
    let (n, k) = (x.rows(), x.cols());
    let mut alpha = vec![0.0; k];
    for r in 0..n {
        for (a, g) in alpha.iter_mut().zip(grad.row(r)) {
            *a += g;
        }
    }
    for a in &mut alpha {
        *a /= n as f64;
    }
    Ok((0..n)
        .map(|r| {
            let s: f64 = x.row(r).iter().zip(&alpha).map(|(v, a)| v * a).sum();
            s.max(0.0)
        })
        .collect())
}

/// Saliency of `graph`'s nodes for the pre-softmax logit of `class`, taken
/// at the named activation.
pub fn gradcam(model: &Model, graph: &PatchGraph, class: usize, layer: &str) -> Result<NodeSaliency> {
    let c = model.config.num_classes;
    if class >= c {
        return Err(Error::InvalidArgument(format!("class {class} outside 0..{c}")));
    }
    let available = model.config.layer_names();
    if !available.iter().any(|l| l == layer) {
        return Err(Error::UnknownLayer {
            name: layer.to_string(),
            available,
        });
    }
    // the label only matters for the loss, which is not used here
    let mut probe = graph.clone();
    probe.label = 0;
    let prepared = model.prepare(&probe)?;
    let mut tape = Tape::new();
    let pass = model.forward(&mut tape, &prepared)?;
    let activation = pass.activation(layer).expect("layer name validated");
    tape.retain_grad(activation);
    let mut onehot = Tensor::zeros(vec![c, 1]);
    onehot.data_mut()[class] = 1.0;
    let select = tape.constant(onehot);
    let score = tape.matmul(pass.logits, select)?;
    let scores = gradcam_from_tape(&mut tape, activation, score)?;
    let max = scores.iter().copied().fold(0.0, f64::max);
    let normalized = if max > 0.0 {
        scores.iter().map(|s| s / max).collect()
    } else {
        vec![0.0; scores.len()]
    };
    Ok(NodeSaliency {
        graph_id: graph.id.clone(),
        class,
        layer: layer.to_string(),
        scores,
        normalized,
        max,
    })
}
