use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One whole-slide image as a graph of patch nodes.
///
/// Features are stored as `f32` so the on-disk blob round-trips bit-exactly;
/// layers read them widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGraph {
    pub id: String,
    pub label: usize,
    /// Patch-center coordinates in patch-grid units, one `[x, y]` per node.
    pub coords: Vec<[f64; 2]>,
    pub feature_dim: usize,
    /// Row-major `num_nodes × feature_dim`.
    pub features: Vec<f32>,
    /// Directed `(src, dst)` pairs; stored symmetric.
    pub edges: Vec<(usize, usize)>,
    /// Planted-region ground truth, when known.
    pub region_mask: Option<Vec<bool>>,
}

impl PatchGraph {
    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn feature_row(&self, node: usize) -> &[f32] {
        &self.features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    /// Checks every structural invariant of a patch graph.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if n == 0 {
            return Err(Error::InvalidInput(format!("graph {:?} has no nodes", self.id)));
        }
        if self.features.len() != n * self.feature_dim {
            return Err(Error::InvalidInput(format!(
                "graph {:?}: {} feature values for {n} nodes × {} dims",
                self.id,
                self.features.len(),
                self.feature_dim
            )));
        }
        if let Some(i) = self.coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::InvalidInput(format!("graph {:?}: non-finite coordinate at node {i}", self.id)));
        }
        if let Some(i) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "graph {:?}: non-finite feature at node {}, channel {}",
                self.id,
                i / self.feature_dim.max(1),
                i % self.feature_dim.max(1)
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for (pos, &(s, d)) in self.edges.iter().enumerate() {
            if s >= n || d >= n {
                return Err(Error::InvalidInput(format!(
                    "graph {:?}: edge {pos} ({s}, {d}) references a node outside 0..{n}",
                    self.id
                )));
            }
            if s == d {
                return Err(Error::InvalidInput(format!("graph {:?}: self-loop at edge {pos} ({s}, {d})", self.id)));
            }
            if !seen.insert((s, d)) {
                return Err(Error::InvalidInput(format!("graph {:?}: duplicate edge ({s}, {d})", self.id)));
            }
        }
        if let Some(&(s, d)) = self.edges.iter().find(|&&(s, d)| !seen.contains(&(d, s))) {
            return Err(Error::InvalidInput(format!(
                "graph {:?}: edge ({s}, {d}) has no reverse edge",
                self.id
            )));
        }
        if let Some(mask) = &self.region_mask {
            if mask.len() != n {
                return Err(Error::InvalidInput(format!(
                    "graph {:?}: region mask has {} entries for {n} nodes",
                    self.id,
                    mask.len()
                )));
            }
        }
        Ok(())
    }

    /// Applies a node relabeling: node `i` becomes `perm[i]`. Edges are
    /// re-sorted so the result is canonical.
    pub fn permuted(&self, perm: &[usize]) -> PatchGraph {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n);
        let d = self.feature_dim;
        let mut coords = vec![[0.0; 2]; n];
        let mut features = vec![0.0f32; n * d];
        for (old, &new) in perm.iter().enumerate() {
            coords[new] = self.coords[old];
            features[new * d..(new + 1) * d].copy_from_slice(self.feature_row(old));
        }
        let mut edges: Vec<_> = self.edges.iter().map(|&(s, t)| (perm[s], perm[t])).collect();
        edges.sort_unstable();
        let region_mask = self.region_mask.as_ref().map(|m| {
            let mut out = vec![false; n];
            for (old, &new) in perm.iter().enumerate() {
                out[new] = m[old];
            }
            out
        });
        PatchGraph {
            id: self.id.clone(),
            label: self.label,
            coords,
            feature_dim: d,
            features,
            edges,
            region_mask,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?} (train, val, test)"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// A labelled collection of patch graphs with split tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub graphs: Vec<PatchGraph>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.graphs.len() != self.splits.len() {
            return Err(Error::InvalidInput(format!(
                "dataset {:?}: {} graphs but {} split tags",
                self.name,
                self.graphs.len(),
                self.splits.len()
            )));
        }
        for g in &self.graphs {
            g.validate()?;
            if g.feature_dim != self.feature_dim {
                return Err(Error::InvalidInput(format!(
                    "graph {:?} has feature dim {}, dataset expects {}",
                    g.id, g.feature_dim, self.feature_dim
                )));
            }
            if g.label >= self.num_classes {
                return Err(Error::InvalidInput(format!(
                    "graph {:?} has label {} but dataset has {} classes",
                    g.id, g.label, self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Graphs tagged with `split`, in dataset order.
    pub fn split(&self, split: Split) -> Vec<&PatchGraph> {
        self.graphs
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(g, _)| g)
            .collect()
    }
}
