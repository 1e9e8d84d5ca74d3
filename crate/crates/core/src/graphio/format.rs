//! `.pgx.json` graph files and `.pgxset.json` dataset manifests.

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Dataset, PatchGraph, Split};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct GraphFile {
    version: u64,
    id: String,
    label: usize,
    num_nodes: usize,
    feature_dim: usize,
    coords: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region_mask: Option<String>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    version: u64,
    name: String,
    num_classes: usize,
    feature_dim: usize,
    graphs: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    split: Split,
}

fn parse_err(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    }
}

fn invalid(path: &Path, msg: impl Into<String>) -> Error {
    Error::InvalidFile {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn parse_versioned<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_err(path, e))?;
    if probe.version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: probe.version,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_str(text).map_err(|e| parse_err(path, e))
}

pub fn f32_to_le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_from_le_bytes(bytes: &[u8], expected_len: usize, what: &str) -> Result<Vec<f32>> {
    if bytes.len() != expected_len * 4 {
        return Err(Error::Truncated {
            what: what.to_string(),
            expected: expected_len * 4,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Little-endian bitset: bit `n` of byte `n / 8` (LSB first) is node `n`.
pub fn encode_mask(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (n, &m) in mask.iter().enumerate() {
        if m {
            out[n / 8] |= 1 << (n % 8);
        }
    }
    out
}

pub fn decode_mask(bytes: &[u8], n: usize) -> Option<Vec<bool>> {
    (bytes.len() == n.div_ceil(8)).then(|| (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

/// Serializes a graph to the `.pgx.json` text form (features embedded).
pub fn graph_to_json(graph: &PatchGraph) -> String {
    let file = GraphFile {
        version: FORMAT_VERSION,
        id: graph.id.clone(),
        label: graph.label,
        num_nodes: graph.num_nodes(),
        feature_dim: graph.feature_dim,
        coords: graph.coords.clone(),
        edges: graph.edges.iter().map(|&(s, d)| [s, d]).collect(),
        features: Some(B64.encode(f32_to_le_bytes(&graph.features))),
        features_file: None,
        region_mask: graph.region_mask.as_ref().map(|m| B64.encode(encode_mask(m))),
    };
    let mut text = serde_json::to_string(&file).expect("graph serializes");
    text.push('\n');
    text
}

pub fn save_graph(graph: &PatchGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    graph.validate()?;
    fs::write(path, graph_to_json(graph)).map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<PatchGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GraphFile = parse_versioned(path, &text)?;
    let n = file.num_nodes;
    if file.coords.len() != n {
        return Err(invalid(path, format!("{} coordinates for num_nodes {n}", file.coords.len())));
    }
    for (pos, e) in file.edges.iter().enumerate() {
        if e[0] >= n || e[1] >= n {
            return Err(invalid(
                path,
                format!("edge {pos} [{}, {}] references a node outside 0..{n}", e[0], e[1]),
            ));
        }
    }
    let expected = n * file.feature_dim;
    let bytes = match (&file.features, &file.features_file) {
        (Some(b64), None) => B64
            .decode(b64)
            .map_err(|e| invalid(path, format!("features are not valid base64: {e}")))?,
        (None, Some(rel)) => {
            let blob = path.parent().unwrap_or(Path::new(".")).join(rel);
            fs::read(&blob).map_err(|e| Error::io(&blob, e))?
        }
        (Some(_), Some(_)) => return Err(invalid(path, "both \"features\" and \"features_file\" given")),
        (None, None) => return Err(invalid(path, "missing \"features\" or \"features_file\"")),
    };
    let features = f32_from_le_bytes(&bytes, expected, &format!("{}: feature blob", path.display()))?;
    let region_mask = match &file.region_mask {
        None => None,
        Some(b64) => {
            let bytes = B64
                .decode(b64)
                .map_err(|e| invalid(path, format!("region_mask is not valid base64: {e}")))?;
            Some(decode_mask(&bytes, n).ok_or_else(|| {
                invalid(path, format!("region_mask has {} bytes, expected {}", bytes.len(), n.div_ceil(8)))
            })?)
        }
    };
    let graph = PatchGraph {
        id: file.id,
        label: file.label,
        coords: file.coords,
        feature_dim: file.feature_dim,
        features,
        edges: file.edges.iter().map(|e| (e[0], e[1])).collect(),
        region_mask,
    };
    graph.validate().map_err(|e| invalid(path, e.to_string()))?;
    Ok(graph)
}

/// File name used for a graph inside a dataset directory.
pub fn graph_file_name(graph: &PatchGraph) -> String {
    format!("{}.pgx.json", graph.id)
}

/// Writes every graph into `dir` plus `<dir>/<name>.pgxset.json`; returns the
/// manifest path.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.graphs.len());
    for (g, &split) in dataset.graphs.iter().zip(&dataset.splits) {
        let name = graph_file_name(g);
        save_graph(g, dir.join(&name))?;
        entries.push(ManifestEntry { path: name, split });
    }
    let manifest = ManifestFile {
        version: FORMAT_VERSION,
        name: dataset.name.clone(),
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim,
        graphs: entries,
    };
    let path = dir.join(format!("{}.pgxset.json", dataset.name));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<Dataset> {
    let path = manifest.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = parse_versioned(path, &text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut graphs = Vec::with_capacity(file.graphs.len());
    let mut splits = Vec::with_capacity(file.graphs.len());
    for entry in &file.graphs {
        graphs.push(load_graph(base.join(&entry.path))?);
        splits.push(entry.split);
    }
    let dataset = Dataset {
        name: file.name,
        num_classes: file.num_classes,
        feature_dim: file.feature_dim,
        graphs,
        splits,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphio::{synth_dataset, SynthConfig};
    use proptest::prelude::*;

    fn small_graph() -> PatchGraph {
        PatchGraph {
            id: "tiny".into(),
            label: 1,
            coords: vec![[0.0, 0.0], [1.0, 0.0], [0.1, 0.7]],
            feature_dim: 2,
            features: vec![1.0, -2.5, f32::MIN_POSITIVE, 3.25, 1e-30, -0.0],
            edges: vec![(0, 1), (1, 0), (1, 2), (2, 1)],
            region_mask: Some(vec![true, false, true]),
        }
    }

    #[test]
    fn graph_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.pgx.json");
        let g = small_graph();
        save_graph(&g, &p).unwrap();
        let back = load_graph(&p).unwrap();
        assert_eq!(back, g);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.features), bits(&g.features));
    }

    #[test]
    fn edge_out_of_range_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgx.json");
        let text = graph_to_json(&small_graph()).replace("[2,1]]", "[2,9]]");
        fs::write(&p, text).unwrap();
        let err = load_graph(&p).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::InvalidFile { .. }));
        assert!(msg.contains("edge 3 [2, 9]"), "{msg}");
    }

    #[test]
    fn truncated_features_report_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.pgx.json");
        let g = small_graph();
        let full = B64.encode(f32_to_le_bytes(&g.features));
        let short = B64.encode(&f32_to_le_bytes(&g.features)[..20]);
        fs::write(&p, graph_to_json(&g).replace(&full, &short)).unwrap();
        match load_graph(&p).unwrap_err() {
            Error::Truncated { expected, actual, .. } => {
                assert_eq!(expected, 24);
                assert_eq!(actual, 20);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.pgx.json");
        fs::write(&p, "{\"version\":1,\n\"id\": ]").unwrap();
        match load_graph(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v2.pgx.json");
        fs::write(&p, graph_to_json(&small_graph()).replace("\"version\":1", "\"version\":2")).unwrap();
        assert!(matches!(
            load_graph(&p),
            Err(Error::UnsupportedVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn external_feature_blob() {
        let dir = tempfile::tempdir().unwrap();
        let g = small_graph();
        fs::write(dir.path().join("feat.f32"), f32_to_le_bytes(&g.features)).unwrap();
        let full = format!("\"features\":\"{}\"", B64.encode(f32_to_le_bytes(&g.features)));
        let text = graph_to_json(&g).replace(&full, "\"features_file\":\"feat.f32\"");
        let p = dir.path().join("ext.pgx.json");
        fs::write(&p, text).unwrap();
        assert_eq!(load_graph(&p).unwrap(), g);
    }

    #[test]
    fn mask_bit_layout() {
        let mask = [true, false, false, false, false, false, false, false, false, true];
        assert_eq!(encode_mask(&mask), vec![0b0000_0001, 0b0000_0010]);
        assert_eq!(decode_mask(&encode_mask(&mask), 10).unwrap(), mask);
    }

    #[test]
    fn dataset_round_trip_is_identity() {
        let cfg = SynthConfig {
            num_graphs: 6,
            num_classes: 3,
            feature_dim: 4,
            grid_w: 5,
            grid_h: 4,
            region_frac: 0.3,
            noise_sigma: 0.5,
            seed: 3,
            k: 8,
        };
        let ds = synth_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(&manifest).unwrap(), ds);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn arbitrary_graph_round_trips(
            pts in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..30),
            feats in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 90),
            label in 0usize..5,
        ) {
            let coords: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let n = coords.len();
            let g = PatchGraph {
                id: "p".into(),
                label,
                edges: crate::graphio::knn_build_edges(&coords, 3).unwrap(),
                coords,
                feature_dim: 3,
                features: feats[..n * 3].to_vec(),
                region_mask: Some((0..n).map(|i| i % 3 == 0).collect()),
            };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("p.pgx.json");
            save_graph(&g, &p).unwrap();
            prop_assert_eq!(load_graph(&p).unwrap(), g);
        }
    }
}
