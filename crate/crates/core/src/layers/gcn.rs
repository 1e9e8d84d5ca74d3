use std::sync::Arc;

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// GCN propagation structure with symmetric degree normalisation
/// `1 / sqrt(|N(j)|·|N(i)|)`, degrees counted with self-loops.
#[derive(Clone, Debug)]
pub struct GcnStructure {
    pub num_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub norm: Tensor,
}

impl GcnStructure {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let mut dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        src.extend(0..num_nodes);
        dst.extend(0..num_nodes);
        let mut deg = vec![0usize; num_nodes];
        for &d in &dst {
            deg[d] += 1;
        }
        let norm: Vec<f64> = src
            .iter()
            .zip(&dst)
            .map(|(&j, &i)| 1.0 / ((deg[j] * deg[i]) as f64).sqrt())
            .collect();
        Self {
            num_nodes,
            norm: Tensor::matrix(norm.len(), 1, norm).expect("one coefficient per edge"),
            src: src.into(),
            dst: dst.into(),
        }
    }
}

/// `x'_i = ReLU(Σ_j W x_j / sqrt(|N(j)|·|N(i)|))`.
pub fn gcn_forward(tape: &mut Tape, structure: &GcnStructure, features: Var, weight: Var) -> Result<Var> {
    if tape.shape(features).first() != Some(&structure.num_nodes) {
        return Err(Error::shape("gcn_forward", tape.shape(features), &[structure.num_nodes]));
    }
    let h = tape.matmul(features, weight)?;
    let norm = tape.constant(structure.norm.clone());
    let agg = tape.scatter_weighted_rows(norm, h, structure.dst.clone(), structure.src.clone(), structure.num_nodes)?;
    tape.relu(agg)
}
