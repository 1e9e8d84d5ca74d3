use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::DEFAULT_LEAKY_SLOPE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two spline convolutions, then two attention layers.
    SplineGat,
    /// Four GCN layers with the same widths.
    GcnBaseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::SplineGat => "spline_gat",
            Variant::GcnBaseline => "gcn_baseline",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_in: usize,
    pub spline_dims: [usize; 2],
    pub spline_degree: usize,
    pub kernel_size: [usize; 2],
    /// Adds the `root·f_i` self term to each spline convolution.
    pub root_weight: bool,
    /// Per-head output width of each attention layer.
    pub gat_dims: [usize; 2],
    pub gat_heads: [usize; 2],
    /// Concatenate (instead of average) the heads of the first attention layer.
    pub concat_heads: bool,
    /// Include `i` in its own attention neighbourhood.
    pub self_loops: bool,
    pub leaky_slope: f64,
    pub mlp_hidden: Vec<usize>,
    pub num_classes: usize,
    pub variant: Variant,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d_in: usize, num_classes: usize) -> Self {
        Self {
            d_in,
            spline_dims: [128, 128],
            spline_degree: 1,
            kernel_size: [5, 5],
            root_weight: true,
            gat_dims: [128, 128],
            gat_heads: [4, 1],
            concat_heads: false,
            self_loops: true,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            mlp_hidden: vec![64],
            num_classes,
            variant: Variant::SplineGat,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_in == 0 {
            return bad("input dimension must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.spline_dims.contains(&0) || self.gat_dims.contains(&0) || self.mlp_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.gat_heads.contains(&0) {
            return bad("attention layers need at least one head".into());
        }
        if self.kernel_size[0] <= self.spline_degree || self.kernel_size[1] <= self.spline_degree {
            return bad(format!(
                "kernel size {:?} needs at least degree + 1 = {} bases per axis",
                self.kernel_size,
                self.spline_degree + 1
            ));
        }
        if !(self.leaky_slope.is_finite()) {
            return bad("leaky slope must be finite".into());
        }
        Ok(())
    }

    /// Width of the first attention layer's output.
    pub fn gat1_out(&self) -> usize {
        if self.concat_heads {
            self.gat_dims[0] * self.gat_heads[0]
        } else {
            self.gat_dims[0]
        }
    }

    /// Width of the last message-passing layer (the pooled width).
    pub fn pooled_dim(&self) -> usize {
        // the second attention layer always averages its heads
        self.gat_dims[1]
    }

    /// Names of activations that can be explained, in forward order.
    pub fn layer_names(&self) -> Vec<String> {
        let names: &[&str] = match self.variant {
            Variant::SplineGat => &["spline1", "spline2", "gat1", "gat2"],
            Variant::GcnBaseline => &["gcn1", "gcn2", "gcn3", "gcn4"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Explanation layer used when none is named: the last message-passing
    /// layer.
    pub fn default_layer(&self) -> String {
        self.layer_names().pop().expect("four layers")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub betas: [f64; 2],
    pub eps: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-3,
            weight_decay: 5e-4,
            batch_size: 2,
            betas: [0.9, 0.999],
            eps: 1e-8,
            schedule: LrSchedule::Constant,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let nonneg = [self.lr, self.weight_decay, self.eps];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("lr, weight decay and eps must be finite and non-negative".into()));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config(format!("betas must lie in [0, 1), got {:?}", self.betas)));
        }
        Ok(())
    }
}
