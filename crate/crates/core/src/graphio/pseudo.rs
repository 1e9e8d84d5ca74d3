use super::PatchGraph;

/// Per-edge relative positions `u(i,j) = (|x_j - x_i|, |y_j - y_i|)`, scaled
/// into `[0,1]²` by the largest component over the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoCoords {
    /// One entry per edge, in the graph's edge order.
    pub u: Vec<[f64; 2]>,
    pub norm_const: f64,
}

pub fn compute_pseudo_coords(graph: &PatchGraph) -> PseudoCoords {
    let raw: Vec<[f64; 2]> = graph
        .edges
        .iter()
        .map(|&(s, d)| {
            let a = graph.coords[s];
            let b = graph.coords[d];
            [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()]
        })
        .collect();
    let max = raw.iter().fold(0.0f64, |m, r| m.max(r[0]).max(r[1]));
    let norm_const = if max > 0.0 { max } else { 1.0 };
    let u = raw
        .into_iter()
        .map(|r| [(r[0] / norm_const).min(1.0), (r[1] / norm_const).min(1.0)])
        .collect();
    PseudoCoords { u, norm_const }
}
