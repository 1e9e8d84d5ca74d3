use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graphio::{compute_pseudo_coords, PatchGraph};
use crate::layers::{
    gat_forward, gcn_forward, global_mean_pool, mlp_forward, softmax_cross_entropy, spline_conv_forward,
    AttentionStructure, GatVars, GcnStructure, HeadCombine, SplineConvVars, SplineStructure,
};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zero,
}

#[derive(Clone, Debug)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn weight(name: String, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape,
        init: Init::Glorot { fan_in, fan_out },
    }
}

fn zero(name: String, shape: Vec<usize>) -> ParamSpec {
    ParamSpec {
        name,
        shape,
        init: Init::Zero,
    }
}

/// Parameter list of a configuration, in binding order.
fn architecture(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let [d1, d2] = cfg.spline_dims;
    let [h1, h2] = cfg.gat_dims;
    match cfg.variant {
        Variant::SplineGat => {
            let p = cfg.kernel_size[0] * cfg.kernel_size[1];
            for (idx, (din, dout)) in [(cfg.d_in, d1), (d1, d2)].into_iter().enumerate() {
                let l = format!("spline{}", idx + 1);
                specs.push(weight(format!("{l}.weight"), vec![p, din, dout], din, dout));
                if cfg.root_weight {
                    specs.push(weight(format!("{l}.root"), vec![din, dout], din, dout));
                }
                specs.push(zero(format!("{l}.bias"), vec![dout]));
            }
            for (idx, (din, dh, heads)) in [(d2, h1, cfg.gat_heads[0]), (cfg.gat1_out(), h2, cfg.gat_heads[1])]
                .into_iter()
                .enumerate()
            {
                for k in 0..heads {
                    let l = format!("gat{}.head{k}", idx + 1);
                    specs.push(weight(format!("{l}.weight"), vec![din, dh], din, dh));
                    specs.push(zero(format!("{l}.att"), vec![2 * dh]));
                }
            }
        }
        Variant::GcnBaseline => {
            for (idx, (din, dout)) in [(cfg.d_in, d1), (d1, d2), (d2, h1), (h1, h2)].into_iter().enumerate() {
                specs.push(weight(format!("gcn{}.weight", idx + 1), vec![din, dout], din, dout));
            }
        }
    }
    let mut dims = vec![cfg.pooled_dim()];
    dims.extend(&cfg.mlp_hidden);
    dims.push(cfg.num_classes);
    for (i, w) in dims.windows(2).enumerate() {
        specs.push(weight(format!("mlp.{i}.weight"), vec![w[0], w[1]], w[0], w[1]));
        specs.push(zero(format!("mlp.{i}.bias"), vec![w[1]]));
    }
    specs
}

/// Named parameter tensors in binding order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Per-graph inputs precomputed once: features and the sparse structures
/// every layer needs.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub num_nodes: usize,
    pub label: usize,
    pub features: Tensor,
    spline: Option<SplineStructure>,
    attention: Option<AttentionStructure>,
    gcn: Option<GcnStructure>,
}

/// Output of a forward pass recorded on a tape.
pub struct ForwardPass {
    pub logits: Var,
    /// `(layer name, N × d activation)` in forward order.
    pub activations: Vec<(String, Var)>,
    /// Tape handles of the parameters, in binding order.
    pub params: Vec<Var>,
}

impl ForwardPass {
    pub fn activation(&self, name: &str) -> Option<Var> {
        self.activations.iter().find(|(n, _)| n == name).map(|a| a.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Initializes parameters deterministically from `config.seed`: weight
    /// matrices fan-based uniform, biases and attention vectors zero.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let specs = architecture(&config);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zero => vec![0.0; n],
                Init::Glorot { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-a..a)).collect()
                }
            };
            names.push(spec.name);
            tensors.push(Tensor::new(spec.shape, data)?);
        }
        Ok(Self {
            config,
            params: ModelParams { names, tensors },
        })
    }

    /// Checks that `params` has exactly the names and shapes `config` implies.
    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let specs = architecture(&config);
        if specs.len() != params.names.len() {
            return Err(Error::Config(format!(
                "configuration needs {} parameter tensors, got {}",
                specs.len(),
                params.names.len()
            )));
        }
        for (spec, (name, t)) in specs.iter().zip(params.names.iter().zip(&params.tensors)) {
            if &spec.name != name || spec.shape != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn prepare(&self, graph: &PatchGraph) -> Result<PreparedGraph> {
        let cfg = &self.config;
        if graph.feature_dim != cfg.d_in {
            return Err(Error::Config(format!(
                "graph {:?} has feature dim {}, model expects {}",
                graph.id, graph.feature_dim, cfg.d_in
            )));
        }
        if graph.label >= cfg.num_classes {
            return Err(Error::Config(format!(
                "graph {:?} has label {}, model has {} classes",
                graph.id, graph.label, cfg.num_classes
            )));
        }
        let n = graph.num_nodes();
        let features = Tensor::matrix(n, graph.feature_dim, graph.features.iter().map(|&v| v as f64).collect())?;
        let (spline, attention, gcn) = match cfg.variant {
            Variant::SplineGat => {
                let pseudo = compute_pseudo_coords(graph);
                (
                    Some(SplineStructure::new(n, &graph.edges, &pseudo, cfg.spline_degree, cfg.kernel_size)?),
                    Some(AttentionStructure::new(n, &graph.edges, cfg.self_loops)),
                    None,
                )
            }
            Variant::GcnBaseline => (None, None, Some(GcnStructure::new(n, &graph.edges))),
        };
        Ok(PreparedGraph {
            num_nodes: n,
            label: graph.label,
            features,
            spline,
            attention,
            gcn,
        })
    }

    /// Records the full forward pass on `tape` with `features` as the input.
    pub fn forward_with_input(&self, tape: &mut Tape, graph: &PreparedGraph, features: Var) -> Result<ForwardPass> {
        let cfg = &self.config;
        let params: Vec<Var> = self.params.tensors.iter().map(|t| tape.param(t.clone())).collect();
        let mut next = params.iter().copied();
        let mut take = || next.next().expect("parameter list matches architecture");
        let mut activations = Vec::with_capacity(4);
        let mut h = features;
        match cfg.variant {
            Variant::SplineGat => {
                let s = graph.spline.as_ref().expect("prepared for spline_gat");
                for name in ["spline1", "spline2"] {
                    let vars = SplineConvVars {
                        weight: take(),
                        root: cfg.root_weight.then(&mut take),
                        bias: take(),
                    };
                    let conv = spline_conv_forward(tape, s, h, &vars)?;
                    h = tape.relu(conv)?;
                    activations.push((name.to_string(), h));
                }
                let a = graph.attention.as_ref().expect("prepared for spline_gat");
                for (idx, name) in ["gat1", "gat2"].into_iter().enumerate() {
                    let combine = if idx == 0 && cfg.concat_heads {
                        HeadCombine::Concat
                    } else {
                        HeadCombine::Average
                    };
                    let vars = GatVars {
                        heads: (0..cfg.gat_heads[idx]).map(|_| (take(), take())).collect(),
                        slope: cfg.leaky_slope,
                        combine,
                    };
                    h = gat_forward(tape, a, h, &vars)?.output;
                    activations.push((name.to_string(), h));
                }
            }
            Variant::GcnBaseline => {
                let s = graph.gcn.as_ref().expect("prepared for gcn_baseline");
                for name in ["gcn1", "gcn2", "gcn3", "gcn4"] {
                    h = gcn_forward(tape, s, h, take())?;
                    activations.push((name.to_string(), h));
                }
            }
        }
        let pooled = global_mean_pool(tape, h)?;
        let head: Vec<(Var, Var)> = (0..cfg.mlp_hidden.len() + 1).map(|_| (take(), take())).collect();
        let logits = mlp_forward(tape, pooled, &head)?;
        Ok(ForwardPass {
            logits,
            activations,
            params,
        })
    }

    pub fn forward(&self, tape: &mut Tape, graph: &PreparedGraph) -> Result<ForwardPass> {
        let x = tape.constant(graph.features.clone());
        self.forward_with_input(tape, graph, x)
    }

    pub fn logits(&self, graph: &PreparedGraph) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, graph)?;
        Ok(tape.value(pass.logits).data().to_vec())
    }

    /// Argmax class; ties go to the lower index.
    pub fn predict(&self, graph: &PreparedGraph) -> Result<usize> {
        Ok(argmax(&self.logits(graph)?))
    }

    /// Cross-entropy loss and its gradient for every parameter.
    pub fn loss_and_grads(&self, graph: &PreparedGraph) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, graph)?;
        let loss = softmax_cross_entropy(&mut tape, pass.logits, graph.label)?;
        tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok((value, pass.params.iter().map(|&p| tape.grad(p)).collect()))
    }

    pub fn loss(&self, graph: &PreparedGraph) -> Result<f64> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, graph)?;
        let loss = softmax_cross_entropy(&mut tape, pass.logits, graph.label)?;
        Ok(tape.value(loss).data()[0])
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
