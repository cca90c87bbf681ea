//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Points travel as flat `[x0, y0, x1, y1, ...]` arrays and edges as flat
//! `[i, j, strength, ...]` triples so the page needs no glue beyond typed arrays.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchlattice::lattice::line_positions;
use sketchlattice::{
    build_adjacency, mask_lattice, sample_lattice, EmbedMode, GraphConfig, LatticeConfig, Point, Proximity, RasterSketch,
    SketchLattice,
};
use wasm_bindgen::prelude::*;

fn js_err(e: sketchlattice::Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.code()))
}

fn lattice_from(points: &[u32], side: usize, n: usize) -> Result<SketchLattice, sketchlattice::Error> {
    if !points.len().is_multiple_of(2) {
        return Err(sketchlattice::Error::ShapeMismatch("points must come in x, y pairs".into()));
    }
    let points = points.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
    Ok(SketchLattice { side, n, points })
}

/// Grid line positions (shared by both axes) for `n` lines on a `side` canvas.
#[wasm_bindgen(js_name = lineLocations)]
pub fn line_locations(n: usize, side: usize) -> Result<Vec<u32>, JsError> {
    let cfg = LatticeConfig::new(n, side).map_err(js_err)?;
    Ok(line_positions(&cfg).into_iter().map(|p| p as u32).collect())
}

/// Lattice points of a square canvas given as one byte per pixel (nonzero is ink).
#[wasm_bindgen(js_name = sampleLattice)]
pub fn sample(pixels: &[u8], side: usize, n: usize) -> Result<Vec<u32>, JsError> {
    sample_points(pixels, side, n).map_err(js_err)
}

pub fn sample_points(pixels: &[u8], side: usize, n: usize) -> Result<Vec<u32>, sketchlattice::Error> {
    let raster = RasterSketch::from_pixels(side, side, pixels.to_vec())?;
    let lattice = sample_lattice(&raster, &LatticeConfig::new(n, side)?)?;
    Ok(lattice.points.iter().flat_map(|p| [p.x, p.y]).collect())
}

/// Drops each point with probability `p_mask`; same seed, same survivors.
#[wasm_bindgen(js_name = maskPoints)]
pub fn mask(points: &[u32], side: usize, p_mask: f64, seed: u64) -> Result<Vec<u32>, JsError> {
    mask_points(points, side, p_mask, seed).map_err(js_err)
}

pub fn mask_points(points: &[u32], side: usize, p_mask: f64, seed: u64) -> Result<Vec<u32>, sketchlattice::Error> {
    if !(0.0..=1.0).contains(&p_mask) {
        return Err(sketchlattice::Error::Config(format!("p_mask {p_mask} must lie in [0, 1]")));
    }
    let lattice = lattice_from(points, side, 1)?;
    let kept = mask_lattice(&lattice, p_mask, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(kept.points.iter().flat_map(|p| [p.x, p.y]).collect())
}

/// Off-diagonal edges `i < j` with their link strength. `nearest` selects the
/// single-neighbour rule, otherwise pairs closer than `threshold` (normalized
/// by the canvas diagonal) are linked.
#[wasm_bindgen(js_name = graphEdges)]
pub fn edges(points: &[u32], side: usize, nearest: bool, threshold: f64) -> Result<Vec<f64>, JsError> {
    graph_edges(points, side, nearest, threshold).map_err(js_err)
}

pub fn graph_edges(points: &[u32], side: usize, nearest: bool, threshold: f64) -> Result<Vec<f64>, sketchlattice::Error> {
    let lattice = lattice_from(points, side, 1)?;
    let cfg = GraphConfig {
        proximity: if nearest { Proximity::Nearest } else { Proximity::Nearby },
        distance_threshold: threshold,
        embed_mode: EmbedMode::Factorized,
        self_loops: true,
    };
    let graph = build_adjacency(&lattice, &cfg)?;
    let mut out = Vec::new();
    for i in 0..graph.len() {
        for j in i + 1..graph.len() {
            let a = graph.adjacency[[i, j]];
            if a > 0.0 {
                out.extend([i as f64, j as f64, a]);
            }
        }
    }
    Ok(out)
}
