use std::sync::Arc;

use super::bspline::bspline_basis;
use crate::autograd::{BlockEntry, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graphio::PseudoCoords;

/// Trainable continuous kernel `g(u) = Σ_p w_p · N_x,p(u_x) · N_y,p(u_y)`.
///
/// `weights` has shape `(k_x·k_y, d_in, d_out)` with kernel index
/// `p = p_y·k_x + p_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineKernel {
    pub degree: usize,
    pub kernel_size: [usize; 2],
    pub weights: Tensor,
    /// `(d_in, d_out)` self term; `None` gives the literal neighbour-mean form.
    pub root_weight: Option<Tensor>,
    pub bias: Tensor,
}

/// A kernel's tensors bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct SplineConvVars {
    pub weight: Var,
    pub root: Option<Var>,
    pub bias: Var,
}

impl SplineKernel {
    pub fn dims(&self) -> (usize, usize) {
        (self.weights.shape()[1], self.weights.shape()[2])
    }

    pub fn bind(&self, tape: &mut Tape) -> SplineConvVars {
        SplineConvVars {
            weight: tape.param(self.weights.clone()),
            root: self.root_weight.as_ref().map(|r| tape.param(r.clone())),
            bias: tape.param(self.bias.clone()),
        }
    }
}

/// Per-graph sparse structure of a spline convolution: for every edge
/// `j → i` and every kernel element `p` supporting `u(i,j)`, the coefficient
/// `N_x,p(u_x)·N_y,p(u_y) / |N_i|`.
///
/// Only kernel elements that some edge actually touches take part in the
/// contraction; `entries[..].block` indexes into `used_blocks`.
#[derive(Clone, Debug)]
pub struct SplineStructure {
    pub num_nodes: usize,
    /// Total kernel elements `P = k_x·k_y`.
    pub num_blocks: usize,
    /// Kernel elements with at least one entry, ascending.
    pub used_blocks: Arc<[usize]>,
    pub entries: Arc<[BlockEntry]>,
}

impl SplineStructure {
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        pseudo: &PseudoCoords,
        degree: usize,
        kernel_size: [usize; 2],
    ) -> Result<Self> {
        let [kx, ky] = kernel_size;
        if kx <= degree || ky <= degree {
            return Err(Error::InvalidArgument(format!(
                "kernel size {kx}x{ky} needs at least degree + 1 = {} bases per axis",
                degree + 1
            )));
        }
        if pseudo.u.len() != edges.len() {
            return Err(Error::shape("spline_conv", &[edges.len()], &[pseudo.u.len()]));
        }
        let mut in_degree = vec![0usize; num_nodes];
        for &(_, dst) in edges {
            in_degree[dst] += 1;
        }
        let mut entries = Vec::with_capacity(edges.len() * (degree + 1) * (degree + 1));
        for (&(src, dst), u) in edges.iter().zip(&pseudo.u) {
            let inv = 1.0 / in_degree[dst] as f64;
            let bx = bspline_basis(u[0], degree, kx);
            let by = bspline_basis(u[1], degree, ky);
            for &(py, wy) in &by {
                for &(px, wx) in &bx {
                    entries.push(BlockEntry {
                        dst,
                        src,
                        block: py * kx + px,
                        coef: wx * wy * inv,
                    });
                }
            }
        }
        let num_blocks = kx * ky;
        let mut compact = vec![usize::MAX; num_blocks];
        for e in &entries {
            compact[e.block] = 0;
        }
        let used_blocks: Vec<usize> = (0..num_blocks).filter(|&p| compact[p] == 0).collect();
        for (slot, &p) in used_blocks.iter().enumerate() {
            compact[p] = slot;
        }
        for e in &mut entries {
            e.block = compact[e.block];
        }
        Ok(Self {
            num_nodes,
            num_blocks,
            used_blocks: used_blocks.into(),
            entries: entries.into(),
        })
    }
}

/// `f'_i = root·f_i + (1/|N_i|) Σ_j f_j·g(u(i,j)) + bias`.
///
/// The neighbour sum is gathered per used kernel element first
/// (`N × (U·d_in)`), then contracted with the matching stacked `w_p` in one
/// matmul.
pub fn spline_conv_forward(
    tape: &mut Tape,
    structure: &SplineStructure,
    features: Var,
    vars: &SplineConvVars,
) -> Result<Var> {
    let wshape = tape.shape(vars.weight).to_vec();
    let fshape = tape.shape(features).to_vec();
    if wshape.len() != 3 || wshape[0] != structure.num_blocks || fshape.len() != 2 || fshape[1] != wshape[1] {
        return Err(Error::shape("spline_conv", &fshape, &wshape));
    }
    if fshape[0] != structure.num_nodes {
        return Err(Error::shape("spline_conv", &fshape, &[structure.num_nodes, wshape[1]]));
    }
    let (d_in, d_out) = (wshape[1], wshape[2]);
    let used = structure.used_blocks.len();
    let mut out = if used == 0 {
        // no edges: the neighbour term vanishes
        tape.constant(Tensor::zeros(vec![structure.num_nodes, d_out]))
    } else {
        let gathered = tape.scatter_blocks(features, structure.entries.clone(), structure.num_nodes, used)?;
        let w_rows = tape.reshape(vars.weight, vec![structure.num_blocks, d_in * d_out])?;
        let w_used = tape.gather_rows(w_rows, structure.used_blocks.clone())?;
        let w_flat = tape.reshape(w_used, vec![used * d_in, d_out])?;
        tape.matmul(gathered, w_flat)?
    };
    if let Some(root) = vars.root {
        let own = tape.matmul(features, root)?;
        out = tape.add(out, own)?;
    }
    tape.add_row_bias(out, vars.bias)
}
