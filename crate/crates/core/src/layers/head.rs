use std::sync::Arc;

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Column means of an `N × d` matrix as a `1 × d` row.
pub fn global_mean_pool(tape: &mut Tape, features: Var) -> Result<Var> {
    let n = tape.shape(features)[0];
    if n == 0 {
        return Err(Error::InvalidArgument("cannot pool an empty graph".into()));
    }
    let seg: Arc<[usize]> = vec![0; n].into();
    tape.segment_mean(features, seg, 1)
}

/// Affine layers with ReLU between them. `layers[i] = (weight (d_i, d_{i+1}),
/// bias (d_{i+1}))`; the last layer's weight columns are the class-score
/// weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl MlpHead {
    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.0.shape()[1]).unwrap_or(0)
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|(w, b)| (tape.param(w.clone()), tape.param(b.clone())))
            .collect()
    }
}

pub fn mlp_forward(tape: &mut Tape, pooled: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut h = pooled;
    for (idx, &(w, b)) in layers.iter().enumerate() {
        if idx > 0 {
            h = tape.relu(h)?;
        }
        let z = tape.matmul(h, w)?;
        h = tape.add_row_bias(z, b)?;
    }
    Ok(h)
}

pub fn softmax_cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    tape.softmax_cross_entropy(logits, label)
}
