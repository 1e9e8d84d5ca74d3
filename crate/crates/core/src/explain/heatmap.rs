use std::fs;
use std::path::{Path, PathBuf};

use super::NodeSaliency;
use crate::error::{Error, Result};

pub const DEFAULT_CELL_PX: usize = 8;

const GRAY: [f64; 3] = [128.0, 128.0, 128.0];
const RED: [f64; 3] = [255.0, 0.0, 0.0];

/// Grid cell `(col, row)` of every node plus the grid size. Each axis is
/// indexed by `round((v − min) / pitch)`, with the pitch being the smallest
/// gap between distinct coordinate values (1 when all values coincide), so
/// integer grid coordinates map to themselves and patch midpoints on a
/// regular stride map to their tile indices.
pub fn grid_cells(coords: &[[f64; 2]]) -> (Vec<(usize, usize)>, usize, usize) {
    if coords.is_empty() {
        return (Vec::new(), 0, 0);
    }
    let axis = |a: usize| {
        let mut vals: Vec<f64> = coords.iter().map(|c| c[a]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let pitch = vals.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let pitch = if pitch.is_finite() && pitch > 0.0 { pitch } else { 1.0 };
        (vals[0], pitch)
    };
    let (x0, px) = axis(0);
    let (y0, py) = axis(1);
    let cells: Vec<(usize, usize)> = coords
        .iter()
        .map(|c| (((c[0] - x0) / px).round() as usize, ((c[1] - y0) / py).round() as usize))
        .collect();
    let w = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let h = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    (cells, w, h)
}

fn check_len(sal: &NodeSaliency, coords: &[[f64; 2]]) -> Result<()> {
    if sal.scores.len() != coords.len() || sal.normalized.len() != coords.len() {
        return Err(Error::InvalidArgument(format!(
            "{} saliency scores for {} coordinates",
            sal.scores.len(),
            coords.len()
        )));
    }
    Ok(())
}

/// `node_id,x,y,score_raw,score_norm` rows with round-trip float formatting.
pub fn heatmap_csv(sal: &NodeSaliency, coords: &[[f64; 2]]) -> Result<String> {
    check_len(sal, coords)?;
    let mut out = String::from("node_id,x,y,score_raw,score_norm\n");
    for (n, c) in coords.iter().enumerate() {
        out.push_str(&format!("{n},{},{},{},{}\n", c[0], c[1], sal.scores[n], sal.normalized[n]));
    }
    Ok(out)
}

/// Binary PPM of the patch grid: black background, each node's cell colored
/// from gray (score 0) to red (score 1) by its normalized score.
pub fn heatmap_ppm(sal: &NodeSaliency, coords: &[[f64; 2]], cell: usize) -> Result<Vec<u8>> {
    check_len(sal, coords)?;
    if cell == 0 {
        return Err(Error::InvalidArgument("heatmap cell size must be positive".into()));
    }
    let (cells, gw, gh) = grid_cells(coords);
    let (w, h) = (gw * cell, gh * cell);
    let mut pixels = vec![0u8; w * h * 3];
    for (&(cx, cy), &s) in cells.iter().zip(&sal.normalized) {
        let t = s.clamp(0.0, 1.0);
        let rgb: Vec<u8> = (0..3).map(|i| (GRAY[i] + (RED[i] - GRAY[i]) * t).round() as u8).collect();
        for y in cy * cell..(cy + 1) * cell {
            for x in cx * cell..(cx + 1) * cell {
                let p = (y * w + x) * 3;
                pixels[p..p + 3].copy_from_slice(&rgb);
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

/// Writes `<prefix>.csv` and `<prefix>.ppm`; returns both paths.
pub fn render_heatmap(
    sal: &NodeSaliency,
    coords: &[[f64; 2]],
    prefix: impl AsRef<Path>,
    cell: usize,
) -> Result<(PathBuf, PathBuf)> {
    let prefix = prefix.as_ref().to_string_lossy().into_owned();
    let csv_path = PathBuf::from(format!("{prefix}.csv"));
    let ppm_path = PathBuf::from(format!("{prefix}.ppm"));
    let csv = heatmap_csv(sal, coords)?;
    let ppm = heatmap_ppm(sal, coords, cell)?;
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&ppm_path, ppm).map_err(|e| Error::io(&ppm_path, e))?;
    Ok((csv_path, ppm_path))
}
