//! Peak reflection cell area: the −3 dB region around the range-angle peak,
//! measured in the Cartesian plane.

use serde::Serialize;
use std::collections::VecDeque;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::spectral::{argmax, RangeAngleMap};

/// A cell as `(range_bin, angle_bin)`; range bins are absolute map bins.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrcaRegion {
    pub cells: Vec<Cell>,
    pub area_m2: f64,
    pub peak: Cell,
    pub threshold: f64,
}

impl PrcaRegion {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("region serialises")
    }
}

/// Cells of the 4-connected component at or above `P_peak/√2` that holds the
/// global peak. Returns `(cells, peak, threshold)`; cells are sorted.
pub fn extract_region(map: &RangeAngleMap) -> Result<(Vec<Cell>, Cell, f64)> {
    let mags = map.magnitudes();
    let peak_idx = argmax(mags);
    let peak = mags.get(peak_idx).copied().unwrap_or(0.0);
    if !(peak > 0.0) {
        return Err(Error::Domain("range-angle map has no positive peak".into()));
    }
    let threshold = peak / SQRT_2;
    let (rows, cols) = (map.rows(), map.cols());
    let mut seen = vec![false; mags.len()];
    let mut queue = VecDeque::from([peak_idx]);
    seen[peak_idx] = true;
    let mut cells = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / cols, i % cols);
        cells.push((r + map.first_range_bin(), c));
        let mut neighbours = Vec::with_capacity(4);
        if r > 0 {
            neighbours.push(i - cols);
        }
        if r + 1 < rows {
            neighbours.push(i + cols);
        }
        if c > 0 {
            neighbours.push(i - 1);
        }
        if c + 1 < cols {
            neighbours.push(i + 1);
        }
        for j in neighbours {
            if !seen[j] && mags[j] >= threshold {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    cells.sort_unstable();
    let peak_cell = (peak_idx / cols + map.first_range_bin(), peak_idx % cols);
    Ok((cells, peak_cell, threshold))
}

/// Polygon area by the shoelace formula; orientation does not matter.
pub fn shoelace_area(vertices: &[(f64, f64)]) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(Error::Domain(format!(
            "polygon needs at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (x0, y0) = vertices[k];
            let (x1, y1) = vertices[(k + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    Ok(0.5 * twice.abs())
}

/// Cartesian corners `(x, y) = (r sin θ, r cos θ)` of a polar cell.
pub fn cell_vertices(r: (f64, f64), theta: (f64, f64)) -> [(f64, f64); 4] {
    let p = |r: f64, t: f64| (r * t.sin(), r * t.cos());
    [p(r.0, theta.0), p(r.1, theta.0), p(r.1, theta.1), p(r.0, theta.1)]
}

pub fn region_area(cells: &[Cell], map: &RangeAngleMap) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::Domain("empty region".into()));
    }
    let edges = map.angle_edges();
    let dr = map.range_bin_m();
    let mut area = 0.0;
    for &(rb, ab) in cells {
        if ab + 1 >= edges.len() {
            return Err(Error::Domain(format!("angle bin {ab} outside the map")));
        }
        let centre = rb as f64 * dr;
        let r = ((centre - 0.5 * dr).max(0.0), centre + 0.5 * dr);
        area += shoelace_area(&cell_vertices(r, (edges[ab], edges[ab + 1])))?;
    }
    Ok(area)
}

pub fn prca(map: &RangeAngleMap) -> Result<PrcaRegion> {
    let (cells, peak, threshold) = extract_region(map)?;
    let area_m2 = region_area(&cells, map)?;
    Ok(PrcaRegion {
        cells,
        area_m2,
        peak,
        threshold,
    })
}
