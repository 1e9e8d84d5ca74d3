use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "pathgraph", version, about = "Position-aware patch-graph classification and Grad-CAM heatmaps")]
pub struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, env = "PATHGRAPH_THREADS")]
    pub threads: Option<usize>,

    /// `key = value` file supplying flag defaults; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic planted-region dataset.
    Synth(SynthArgs),
    /// Build a graph file from a patch coordinate table and a feature blob.
    BuildGraph(BuildGraphArgs),
    /// Train a model and write a checkpoint plus per-epoch metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Write Grad-CAM node saliency for one graph as CSV and PPM.
    Explain(ExplainArgs),
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad grid size {s:?}: {e}"));
    Ok([parse(w)?, parse(h)?])
}

fn grid_string<S: serde::Serializer>(g: &[usize; 2], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}x{}", g[0], g[1]))
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Output directory for graph files and the dataset manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub graphs: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Patch grid size, e.g. 12x12.
    #[arg(long, default_value = "12x12", value_parser = parse_grid)]
    #[serde(serialize_with = "grid_string")]
    pub grid: [usize; 2],
    /// Fraction of nodes in the planted region, in (0, 1).
    #[arg(long, default_value_t = 0.25)]
    pub region_frac: f64,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Neighbours per node for the kNN graph.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct BuildGraphArgs {
    /// CSV with an `x,y` header and one patch midpoint per row.
    #[arg(long)]
    pub coords: PathBuf,
    /// Little-endian f32 blob, rows × dim values.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub label: usize,
    /// Graph id; defaults to the output file name without extension.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    /// Two spline convolutions followed by two attention layers.
    SplineGat,
    /// Four GCN layers.
    Gcn,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Dataset manifest (`.pgxset.json`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "spline-gat")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Decoupled weight decay.
    #[arg(long, default_value_t = 5e-4)]
    pub wd: f64,
    /// Graphs per optimizer step.
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Heads of the first attention layer.
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Concatenate instead of averaging the first attention layer's heads.
    #[arg(long)]
    pub concat_heads: bool,
    /// Drop the root (self) term of the spline convolutions.
    #[arg(long)]
    pub no_root_weight: bool,
    /// Cosine learning-rate decay instead of a constant rate.
    #[arg(long)]
    pub cosine: bool,
    /// Seeds parameter initialisation and batch shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint base path; writes `<out>.ckpt.json`, `<out>.ckpt.bin` and
    /// `<out>.metrics.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Output report JSON.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct ExplainArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// Class to explain; defaults to the predicted class.
    #[arg(long)]
    pub class: Option<usize>,
    /// Activation to explain; defaults to the last message-passing layer.
    #[arg(long)]
    pub layer: Option<String>,
    /// Writes `<prefix>.csv` and `<prefix>.ppm`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    /// Heatmap cell size in pixels.
    #[arg(long, default_value_t = 8)]
    pub cell: usize,
}
