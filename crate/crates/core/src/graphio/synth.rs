use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{knn_build_edges, Dataset, PatchGraph, Split};
use crate::error::{Error, Result};

/// Shift added to channel `c` of planted-region nodes in a class-`c` graph.
pub const SIGNATURE_SHIFT: f64 = 2.0;

/// Planted-region generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_graphs: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub region_frac: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Neighbour count for the kNN edges.
    pub k: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_graphs: 200,
            num_classes: 5,
            feature_dim: 64,
            grid_w: 12,
            grid_h: 12,
            region_frac: 0.25,
            noise_sigma: 0.5,
            seed: 7,
            k: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_graphs == 0 {
            return bad("num_graphs must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("classes must be at least 2, got {}", self.num_classes));
        }
        if self.feature_dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.feature_dim));
        }
        if self.num_classes > self.feature_dim {
            return bad(format!(
                "classes ({}) must not exceed dim ({}): class c marks channel c",
                self.num_classes, self.feature_dim
            ));
        }
        if self.grid_w < 4 || self.grid_h < 4 {
            return bad(format!("grid must be at least 4x4, got {}x{}", self.grid_w, self.grid_h));
        }
        if !(self.region_frac > 0.0 && self.region_frac < 1.0) {
            return bad(format!("region-frac must lie in (0, 1), got {}", self.region_frac));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise must be a finite value >= 0, got {}", self.noise_sigma));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        Ok(())
    }

    pub fn region_size(&self) -> usize {
        let n = self.grid_w * self.grid_h;
        ((self.region_frac * n as f64).round() as usize).clamp(1, n - 1)
    }
}

/// Cells of the planted region: the first `count` cells, row-major, of a
/// near-square rectangle with top-left corner `(x0, y0)`.
fn region_cells(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let count = cfg.region_size();
    let mut w = ((count as f64).sqrt().ceil() as usize).min(cfg.grid_w);
    let mut h = count.div_ceil(w);
    if h > cfg.grid_h {
        h = cfg.grid_h;
        w = count.div_ceil(h);
    }
    let x0 = rng.random_range(0..=cfg.grid_w - w);
    let y0 = rng.random_range(0..=cfg.grid_h - h);
    (0..count)
        .map(|i| (y0 + i / w) * cfg.grid_w + x0 + i % w)
        .collect()
}

/// Generates a dataset of grid graphs whose class is marked only inside a
/// contiguous planted region. Graph `i` draws from its own stream seeded with
/// `seed + i`; splits are a seeded 70/15/15 shuffle.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.grid_w * cfg.grid_h;
    let d = cfg.feature_dim;
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|i| [(i % cfg.grid_w) as f64, (i / cfg.grid_w) as f64])
        .collect();
    let edges = knn_build_edges(&coords, cfg.k)?;
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let graphs = (0..cfg.num_graphs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let label = i % cfg.num_classes;
            let mut mask = vec![false; n];
            for cell in region_cells(cfg, &mut rng) {
                mask[cell] = true;
            }
            let mut features = Vec::with_capacity(n * d);
            for node in 0..n {
                for ch in 0..d {
                    let mut v = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    if mask[node] && ch == label {
                        v += SIGNATURE_SHIFT;
                    }
                    features.push(v as f32);
                }
            }
            PatchGraph {
                id: format!("g{i:04}"),
                label,
                coords: coords.clone(),
                feature_dim: d,
                features,
                edges: edges.clone(),
                region_mask: Some(mask),
            }
        })
        .collect();

    Ok(Dataset {
        name: "synth".into(),
        num_classes: cfg.num_classes,
        feature_dim: d,
        graphs,
        splits: split_tags(cfg.num_graphs, cfg.seed),
    })
}

/// Seeded 70/15/15 train/val/test assignment.
pub fn split_tags(count: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (count as f64 * 0.70).round() as usize;
    let n_val = ((count as f64 * 0.15).round() as usize).min(count - n_train);
    let mut tags = vec![Split::Test; count];
    for (rank, &g) in order.iter().enumerate() {
        if rank < n_train {
            tags[g] = Split::Train;
        } else if rank < n_train + n_val {
            tags[g] = Split::Val;
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(noise: f64) -> SynthConfig {
        SynthConfig {
            num_graphs: 10,
            num_classes: 3,
            feature_dim: 4,
            grid_w: 6,
            grid_h: 5,
            region_frac: 0.2,
            noise_sigma: noise,
            seed: 11,
            k: 8,
        }
    }

    #[test]
    fn noiseless_signature_is_exact() {
        let ds = synth_dataset(&cfg(0.0)).unwrap();
        for g in &ds.graphs {
            let mask = g.region_mask.as_ref().unwrap();
            for node in 0..g.num_nodes() {
                for (ch, &v) in g.feature_row(node).iter().enumerate() {
                    let want = if mask[node] && ch == g.label { 2.0 } else { 0.0 };
                    assert_eq!(v, want);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_dataset(&cfg(0.5)).unwrap();
        let b = synth_dataset(&cfg(0.5)).unwrap();
        assert_eq!(a, b);
        let bytes = |d: &Dataset| d.graphs.iter().map(crate::graphio::graph_to_json).collect::<String>();
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn default_scale_counts() {
        let c = SynthConfig::default();
        let ds = synth_dataset(&c).unwrap();
        assert_eq!(ds.graphs.len(), 200);
        for g in &ds.graphs {
            assert_eq!(g.num_nodes(), 144);
            assert_eq!(g.region_mask.as_ref().unwrap().iter().filter(|&&m| m).count(), 36);
        }
        let count = |s| ds.splits.iter().filter(|&&t| t == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (140, 30, 30));
        ds.validate().unwrap();
    }

    #[test]
    fn region_is_contiguous() {
        let c = cfg(0.0);
        let ds = synth_dataset(&c).unwrap();
        for g in &ds.graphs {
            let mask = g.region_mask.as_ref().unwrap();
            let members: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            // flood fill over 4-neighbourhood from the first member
            let mut seen = vec![false; mask.len()];
            let mut stack = vec![members[0]];
            seen[members[0]] = true;
            while let Some(v) = stack.pop() {
                let (x, y) = (v % c.grid_w, v / c.grid_w);
                let mut nbrs = vec![];
                if x > 0 { nbrs.push(v - 1) }
                if x + 1 < c.grid_w { nbrs.push(v + 1) }
                if y > 0 { nbrs.push(v - c.grid_w) }
                if y + 1 < c.grid_h { nbrs.push(v + c.grid_w) }
                for u in nbrs {
                    if mask[u] && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            assert!(members.iter().all(|&m| seen[m]));
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(0.1);
        c.region_frac = 1.5;
        assert!(synth_dataset(&c).unwrap_err().to_string().contains("region-frac"));
        let mut c = cfg(0.1);
        c.num_classes = 1;
        assert!(synth_dataset(&c).is_err());
        let mut c = cfg(0.1);
        c.grid_w = 3;
        assert!(synth_dataset(&c).is_err());
        let mut c = cfg(0.1);
        c.num_classes = 5;
        assert!(synth_dataset(&c).is_err());
    }
}
