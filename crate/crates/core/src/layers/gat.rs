use std::sync::Arc;

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// How the per-head outputs of an attention layer are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadCombine {
    Average,
    Concat,
}

/// Multi-head graph attention layer parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    /// Per head: projection `(d_in, d_head)` and attention vector `(2·d_head)`.
    pub heads: Vec<(Tensor, Tensor)>,
    pub slope: f64,
    pub combine: HeadCombine,
}

#[derive(Clone, Debug)]
pub struct GatVars {
    pub heads: Vec<(Var, Var)>,
    pub slope: f64,
    pub combine: HeadCombine,
}

impl GatLayer {
    pub fn d_head(&self) -> usize {
        self.heads[0].0.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        match self.combine {
            HeadCombine::Average => self.d_head(),
            HeadCombine::Concat => self.d_head() * self.heads.len(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> GatVars {
        GatVars {
            heads: self
                .heads
                .iter()
                .map(|(w, a)| (tape.param(w.clone()), tape.param(a.clone())))
                .collect(),
            slope: self.slope,
            combine: self.combine,
        }
    }
}

/// Attention neighbourhoods: every edge `src → dst`, plus one self-loop per
/// node when enabled.
#[derive(Clone, Debug)]
pub struct AttentionStructure {
    pub num_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
}

impl AttentionStructure {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)], self_loops: bool) -> Self {
        let mut src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let mut dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        if self_loops {
            src.extend(0..num_nodes);
            dst.extend(0..num_nodes);
        }
        Self {
            num_nodes,
            src: src.into(),
            dst: dst.into(),
        }
    }
}

pub struct GatOutput {
    pub output: Var,
    /// Per head, one attention coefficient per structure edge (`E × 1`).
    pub attention: Vec<Var>,
}

/// Per head `k`: `e_ij = LeakyReLU(aᵀ[W x_i ‖ W x_j])`, `α_ij` the softmax of
/// `e_ij` over `j` in the neighbourhood of `i`, and `h_i = Σ_j α_ij W x_j`.
/// Heads are averaged or concatenated and ReLU is applied last.
pub fn gat_forward(tape: &mut Tape, structure: &AttentionStructure, features: Var, vars: &GatVars) -> Result<GatOutput> {
    if vars.heads.is_empty() {
        return Err(Error::InvalidArgument("attention layer needs at least one head".into()));
    }
    let n = structure.num_nodes;
    if tape.shape(features).first() != Some(&n) {
        return Err(Error::shape("gat_forward", tape.shape(features), &[n]));
    }
    let mut head_out = Vec::with_capacity(vars.heads.len());
    let mut attention = Vec::with_capacity(vars.heads.len());
    for &(w, a) in &vars.heads {
        let d_head = tape.shape(w)[1];
        if tape.value(a).len() != 2 * d_head {
            return Err(Error::shape("gat_forward", tape.shape(w), tape.shape(a)));
        }
        // aᵀ[h_i ‖ h_j] = a_dstᵀh_i + a_srcᵀh_j: score every node once, then
        // sum the two halves per edge
        let h = tape.matmul(features, w)?;
        let a_rows = tape.reshape(a, vec![2, d_head])?;
        let a_cols = tape.transpose(a_rows)?;
        let scores = tape.matmul(h, a_cols)?;
        let logits = tape.gather_pair_sum(scores, structure.dst.clone(), structure.src.clone())?;
        let logits = tape.leaky_relu(logits, vars.slope)?;
        let alpha = tape.segment_softmax(logits, structure.dst.clone(), n)?;
        head_out.push(tape.scatter_weighted_rows(alpha, h, structure.dst.clone(), structure.src.clone(), n)?);
        attention.push(alpha);
    }
    let combined = match vars.combine {
        HeadCombine::Concat => tape.concat_cols(&head_out)?,
        HeadCombine::Average => {
            let mut sum = head_out[0];
            for &h in &head_out[1..] {
                sum = tape.add(sum, h)?;
            }
            if head_out.len() > 1 {
                tape.scale(sum, 1.0 / head_out.len() as f64)?
            } else {
                sum
            }
        }
    };
    Ok(GatOutput {
        output: tape.relu(combined)?,
        attention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::finite_diff_check;
    use crate::layers::test_util::{features_of, random_graph, random_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, k: usize, d_in: usize, d_head: usize, combine: HeadCombine) -> GatLayer {
        GatLayer {
            heads: (0..k)
                .map(|_| (random_tensor(rng, vec![d_in, d_head]), random_tensor(rng, vec![2 * d_head])))
                .collect(),
            slope: 0.2,
            combine,
        }
    }

    fn run(x: &Tensor, s: &AttentionStructure, layer: &GatLayer) -> (Tensor, Vec<Tensor>) {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let vars = layer.bind(&mut t);
        let out = gat_forward(&mut t, s, xv, &vars).unwrap();
        (t.value(out.output).clone(), out.attention.iter().map(|&a| t.value(a).clone()).collect())
    }

    /// Naïve double loop over nodes and their neighbourhoods.
    fn oracle(x: &Tensor, s: &AttentionStructure, layer: &GatLayer) -> Tensor {
        let n = s.num_nodes;
        let d_in = x.cols();
        let dh = layer.d_head();
        let k = layer.heads.len();
        let mut heads = Vec::new();
        for (w, a) in &layer.heads {
            let wx: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..dh).map(|c| (0..d_in).map(|r| x.get(i, r) * w.get(r, c)).sum()).collect())
                .collect();
            let mut out = vec![vec![0.0; dh]; n];
            for i in 0..n {
                let nbrs: Vec<usize> = (0..s.dst.len()).filter(|&e| s.dst[e] == i).map(|e| s.src[e]).collect();
                let scores: Vec<f64> = nbrs
                    .iter()
                    .map(|&j| {
                        let z: f64 = (0..dh).map(|c| a.data()[c] * wx[i][c] + a.data()[dh + c] * wx[j][c]).sum();
                        if z > 0.0 { z } else { 0.2 * z }
                    })
                    .collect();
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|e| (e - m).exp()).sum();
                for (idx, &j) in nbrs.iter().enumerate() {
                    let alpha = (scores[idx] - m).exp() / z;
                    for c in 0..dh {
                        out[i][c] += alpha * wx[j][c];
                    }
                }
            }
            heads.push(out);
        }
        let width = layer.output_dim();
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            for c in 0..width {
                let v = match layer.combine {
                    HeadCombine::Average => heads.iter().map(|h| h[i][c]).sum::<f64>() / k as f64,
                    HeadCombine::Concat => heads[c / dh][i][c % dh],
                };
                data[i * width + c] = v.max(0.0);
            }
        }
        Tensor::matrix(n, width, data).unwrap()
    }

    fn attention_rows_sum_to_one(s: &AttentionStructure, att: &[Tensor]) {
        for a in att {
            let mut sums = vec![0.0; s.num_nodes];
            for (e, &d) in s.dst.iter().enumerate() {
                sums[d] += a.data()[e];
            }
            for v in sums {
                assert!((v - 1.0).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn zero_attention_vector_gives_neighbourhood_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 8, 3);
        let s = AttentionStructure::new(8, &g.edges, true);
        let mut layer = random_layer(&mut rng, 1, 3, 4, HeadCombine::Average);
        layer.heads[0].1 = Tensor::zeros(vec![8]);
        let x = features_of(&g);
        let (out, att) = run(&x, &s, &layer);
        let w = &layer.heads[0].0;
        for i in 0..8 {
            let nbrs: Vec<usize> = (0..s.dst.len()).filter(|&e| s.dst[e] == i).map(|e| s.src[e]).collect();
            for e in (0..s.dst.len()).filter(|&e| s.dst[e] == i) {
                assert!((att[0].data()[e] - 1.0 / nbrs.len() as f64).abs() < 1e-15);
            }
            for c in 0..4 {
                let mean: f64 = nbrs.iter().map(|&j| (0..3).map(|r| x.get(j, r) * w.get(r, c)).sum::<f64>()).sum::<f64>()
                    / nbrs.len() as f64;
                assert!((out.get(i, c) - mean.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, vec![1, 3]);
        let s = AttentionStructure::new(1, &[], true);
        let layer = random_layer(&mut rng, 1, 3, 2, HeadCombine::Average);
        let (out, att) = run(&x, &s, &layer);
        assert_eq!(att[0].data(), &[1.0]);
        let w = &layer.heads[0].0;
        for c in 0..2 {
            let wx: f64 = (0..3).map(|r| x.get(0, r) * w.get(r, c)).sum();
            assert!((out.get(0, c) - wx.max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn random_graphs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..60 {
            let n = if i == 0 { 5 } else { rng.random_range(1..30) };
            let g = random_graph(&mut rng, n, 3);
            let self_loops = i % 4 != 3;
            let s = AttentionStructure::new(n, &g.edges, self_loops);
            let combine = if i % 2 == 0 { HeadCombine::Average } else { HeadCombine::Concat };
            let layer = random_layer(&mut rng, 2, 3, 3, combine);
            let x = features_of(&g);
            let (out, att) = run(&x, &s, &layer);
            let diff = out.max_abs_diff(&oracle(&x, &s, &layer));
            assert!(diff < 1e-12, "{diff}");
            if self_loops {
                attention_rows_sum_to_one(&s, &att);
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10;
        let g = random_graph(&mut rng, n, 3);
        let layer = random_layer(&mut rng, 3, 3, 2, HeadCombine::Average);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let p = g.permuted(&perm);
        let (a, _) = run(&features_of(&g), &AttentionStructure::new(n, &g.edges, true), &layer);
        let (b, _) = run(&features_of(&p), &AttentionStructure::new(n, &p.edges, true), &layer);
        for i in 0..n {
            for c in 0..2 {
                assert!((a.get(i, c) - b.get(perm[i], c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 10 {
            let n = rng.random_range(2..12);
            let g = random_graph(&mut rng, n, 3);
            let s = AttentionStructure::new(n, &g.edges, true);
            let layer = random_layer(&mut rng, 2, 3, 2, HeadCombine::Average);
            let x = features_of(&g);
            let probe = random_tensor(&mut rng, vec![2 * n, 1]);
            let forward = |t: &mut Tape, xv: Var, w0: Option<Var>| -> Result<Var> {
                let mut vars = layer.bind(t);
                if let Some(w0) = w0 {
                    vars.heads[0].1 = w0;
                }
                let out = gat_forward(t, &s, xv, &vars)?;
                let flat = t.reshape(out.output, vec![1, 2 * n])?;
                let p = t.constant(probe.clone());
                t.matmul(flat, p)
            };
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            forward(&mut t, xv, None).unwrap();
            if t.min_abs_kink_input() < 1e-4 {
                continue;
            }
            let ex = finite_diff_check(|t, v| forward(t, v, None), &x, 1e-6).unwrap();
            let ea = finite_diff_check(
                |t, v| {
                    let xv = t.constant(x.clone());
                    forward(t, xv, Some(v))
                },
                &layer.heads[0].1,
                1e-6,
            )
            .unwrap();
            assert!(ex < 1e-6 && ea < 1e-6, "{ex} {ea}");
            checked += 1;
        }
    }
}
