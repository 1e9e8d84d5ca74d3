use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use pathgraph_core::graphio::{self, f32_from_le_bytes, knn_build_edges, load_dataset, load_graph, save_graph};
use pathgraph_core::metrics::evaluate;
use pathgraph_core::parallel::resolve_threads;
use pathgraph_core::train::{argmax, metrics_csv, train, LrSchedule};
use pathgraph_core::{
    explain, gradcam, Checkpoint, Error, ModelConfig, PatchGraph, Split, SynthConfig, TrainConfig, Variant,
};

use crate::args::{
    BuildGraphArgs, Cli, Command, EvalArgs, ExplainArgs, SplitArg, SynthArgs, TrainArgs, VariantArg,
};
use crate::usage;

/// Writes the fully resolved configuration to stderr as TOML.
fn print_resolved<T: Serialize>(name: &str, threads: usize, args: &T) {
    #[derive(Serialize)]
    struct Resolved<'a, T> {
        threads: usize,
        #[serde(flatten)]
        args: &'a T,
    }
    let body = toml::to_string(&Resolved { threads, args }).unwrap_or_else(|e| format!("# unprintable: {e}\n"));
    eprint!("# pathgraph {name}: resolved config\n{body}");
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads);
    match &cli.command {
        Command::Synth(a) => {
            print_resolved("synth", threads, a);
            synth(a)
        }
        Command::BuildGraph(a) => {
            print_resolved("build-graph", threads, a);
            build_graph(a)
        }
        Command::Train(a) => {
            print_resolved("train", threads, a);
            train_cmd(a, threads)
        }
        Command::Eval(a) => {
            print_resolved("eval", threads, a);
            eval(a, threads)
        }
        Command::Explain(a) => {
            print_resolved("explain", threads, a);
            explain_cmd(a)
        }
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_graphs: a.graphs,
        num_classes: a.classes,
        feature_dim: a.dim,
        grid_w: a.grid[0],
        grid_h: a.grid[1],
        region_frac: a.region_frac,
        noise_sigma: a.noise,
        seed: a.seed,
        k: a.k,
    };
    let ds = graphio::synth_dataset(&cfg)?;
    let manifest = graphio::save_dataset(&ds, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

#[derive(Deserialize)]
struct CoordRow {
    x: f64,
    y: f64,
}

fn read_coords(path: &Path) -> Result<Vec<[f64; 2]>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut coords = Vec::new();
    for (i, row) in reader.deserialize::<CoordRow>().enumerate() {
        let row = row.map_err(|e| usage(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        coords.push([row.x, row.y]);
    }
    if coords.is_empty() {
        return Err(usage(format!("{}: no coordinate rows (expected an x,y header and one row per patch)", path.display())));
    }
    Ok(coords)
}

/// Id used when none is given: the output file name minus its extensions.
fn default_id(out: &Path) -> String {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".pgx.json").or_else(|| name.strip_suffix(".json")).unwrap_or(&name);
    if stem.is_empty() {
        "graph".into()
    } else {
        stem.into()
    }
}

fn build_graph(a: &BuildGraphArgs) -> Result<()> {
    if a.dim == 0 {
        return Err(usage("--dim must be at least 1"));
    }
    let coords = read_coords(&a.coords)?;
    let bytes = fs::read(&a.features).map_err(|e| Error::io(&a.features, e))?;
    let what = format!("{} ({} rows × {} dims × 4 bytes)", a.features.display(), coords.len(), a.dim);
    let features = f32_from_le_bytes(&bytes, coords.len() * a.dim, &what)?;
    let edges = knn_build_edges(&coords, a.k)?;
    let id = a.id.clone().unwrap_or_else(|| default_id(&a.out));
    eprintln!("id = {id:?}");
    let graph = PatchGraph {
        id,
        label: a.label,
        coords,
        feature_dim: a.dim,
        features,
        edges,
        region_mask: None,
    };
    graph.validate()?;
    save_graph(&graph, &a.out)?;
    println!("{}: {} nodes, {} edges", a.out.display(), graph.num_nodes(), graph.edges.len());
    Ok(())
}

fn metrics_path(out: &Path) -> PathBuf {
    let (manifest, _) = pathgraph_core::train::checkpoint_paths(out);
    let s = manifest.to_string_lossy();
    PathBuf::from(format!("{}.metrics.csv", s.strip_suffix(".ckpt.json").unwrap_or(&s)))
}

fn train_cmd(a: &TrainArgs, threads: usize) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let model_cfg = ModelConfig {
        gat_heads: [a.heads, 1],
        concat_heads: a.concat_heads,
        root_weight: !a.no_root_weight,
        variant: match a.variant {
            VariantArg::SplineGat => Variant::SplineGat,
            VariantArg::Gcn => Variant::GcnBaseline,
        },
        seed: a.seed,
        ..ModelConfig::new(ds.feature_dim, ds.num_classes)
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.wd,
        batch_size: a.batch,
        schedule: if a.cosine { LrSchedule::Cosine } else { LrSchedule::Constant },
        seed: a.seed,
        ..TrainConfig::default()
    };
    let outcome = train(&ds, &model_cfg, &cfg, threads)?;
    for l in &outcome.log {
        let kappa = l.val_kappa.map_or("undefined".to_string(), |k| format!("{k:.4}"));
        eprintln!("epoch {:>3}  loss {:.5}  val kappa {kappa}  lr {:.3e}", l.epoch, l.train_loss, l.lr);
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let manifest = outcome.checkpoint.save(&a.out)?;
    let csv_path = metrics_path(&a.out);
    fs::write(&csv_path, metrics_csv(&outcome.log)).map_err(|e| Error::io(&csv_path, e))?;
    eprintln!("kept epoch {}; wrote {} and {}", outcome.checkpoint.epoch, manifest.display(), csv_path.display());
    match outcome.final_val_kappa() {
        Some(k) => println!("final val kappa: {k}"),
        None => println!("final val kappa: undefined"),
    }
    Ok(())
}

fn eval(a: &EvalArgs, threads: usize) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    let graphs = ds.split(split);
    if graphs.is_empty() {
        return Err(usage(format!("dataset {:?} has no {split} graphs", ds.name)));
    }
    let report = evaluate(&ckpt.model, &graphs, threads)?;
    let mut text = serde_json::to_string_pretty(&report).context("serializing report")?;
    text.push('\n');
    fs::write(&a.report, text).map_err(|e| Error::io(&a.report, e))?;
    let show = |k: Option<f64>| k.map_or("undefined".to_string(), |k| format!("{k:.4}"));
    println!(
        "{split}: n={} accuracy={:.4} kappa_quadratic={} kappa_unweighted={}",
        report.n,
        report.accuracy,
        show(report.kappa_quadratic),
        show(report.kappa_unweighted)
    );
    Ok(())
}

fn explain_cmd(a: &ExplainArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let model = &ckpt.model;
    let graph = load_graph(&a.graph)?;
    let class = match a.class {
        Some(c) => c,
        None => {
            // the stored label may lie outside the model's classes; it is
            // irrelevant to the prediction
            let mut probe = graph.clone();
            probe.label = 0;
            argmax(&model.logits(&model.prepare(&probe)?)?)
        }
    };
    let layer = a.layer.clone().unwrap_or_else(|| model.config.default_layer());
    eprintln!("class = {class}\nlayer = {layer:?}");
    let sal = gradcam(model, &graph, class, &layer)?;
    let (csv_path, ppm_path) = explain::render_heatmap(&sal, &graph.coords, &a.out_prefix, a.cell)?;
    println!(
        "class {class} at {layer}: max score {}; wrote {} and {}",
        sal.max,
        csv_path.display(),
        ppm_path.display()
    );
    Ok(())
}
