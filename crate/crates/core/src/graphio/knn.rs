use crate::error::{Error, Result};

/// Exact k-nearest-neighbour edges, symmetrized and sorted.
///
/// Each node links to its `k` closest other nodes by Euclidean distance
/// (ties go to the lower index); reverse edges are then added and
/// duplicates dropped. The result is sorted by `(src, dst)`.
pub fn knn_build_edges(coords: &[[f64; 2]], k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(i) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite coordinate at node {i}")));
    }
    let n = coords.len();
    let mut edges = Vec::with_capacity(2 * n * k.min(n.saturating_sub(1)));
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| {
            let dx = coords[j][0] - coords[i][0];
            let dy = coords[j][1] - coords[i][1];
            (dx * dx + dy * dy, j)
        }));
        let take = k.min(cand.len());
        if take == 0 {
            continue;
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if take < cand.len() {
            cand.select_nth_unstable_by(take - 1, cmp);
        }
        for &(_, j) in &cand[..take] {
            edges.push((i, j));
            edges.push((j, i));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}
