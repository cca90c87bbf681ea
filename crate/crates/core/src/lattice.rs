//! Lattice sampling: the points where dark raster pixels meet a uniform grid
//! of `n` horizontal and `n` vertical lines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch_data::{RasterSketch, CANVAS_SIDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Lines per direction.
    pub n: usize,
    pub side: usize,
}

impl LatticeConfig {
    pub fn new(n: usize, side: usize) -> Result<Self> {
        let cfg = LatticeConfig { n, side };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_grid(n: usize) -> Result<Self> {
        Self::new(n, CANVAS_SIDE)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > self.side {
            return Err(Error::Config(format!(
                "lattice grid n = {} must lie in [1, {}]",
                self.n, self.side
            )));
        }
        Ok(())
    }
}

/// Integer point on the canvas; `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Point { x, y }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchLattice {
    pub side: usize,
    pub n: usize,
    /// Unique points in row-major order.
    pub points: Vec<Point>,
}

impl SketchLattice {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `{"side":256,"n":32,"points":[[x,y],...]}`
    pub fn to_json(&self) -> serde_json::Value {
        let pts: Vec<[u32; 2]> = self.points.iter().map(|p| [p.x, p.y]).collect();
        serde_json::json!({ "side": self.side, "n": self.n, "points": pts })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<SketchLattice> {
        #[derive(Deserialize)]
        struct Raw {
            side: usize,
            n: usize,
            points: Vec<[u32; 2]>,
        }
        let raw: Raw = serde_json::from_value(value.clone())
            .map_err(|e| Error::MalformedRecord(format!("lattice JSON: {e}")))?;
        let mut points: Vec<Point> = raw.points.iter().map(|p| Point::new(p[0], p[1])).collect();
        if let Some(p) = points.iter().find(|p| p.x as usize >= raw.side || p.y as usize >= raw.side) {
            return Err(Error::OutOfRange { x: p.x as i64, y: p.y as i64, side: raw.side });
        }
        points.sort_by_key(|p| (p.y, p.x));
        points.dedup();
        Ok(SketchLattice { side: raw.side, n: raw.n, points })
    }
}

/// `round((k + 0.5) * side / n)` for `k = 0..n`, with exact halves rounded
/// down so that `n = side` yields every pixel once.
pub fn line_positions(cfg: &LatticeConfig) -> Vec<usize> {
    (0..cfg.n)
        .map(|k| {
            let centre = (k as f64 + 0.5) * cfg.side as f64 / cfg.n as f64;
            ((centre - 0.5).ceil() as usize).min(cfg.side - 1)
        })
        .collect()
}

/// Every dark pixel lying on a horizontal or vertical lattice line, once.
pub fn sample_lattice(raster: &RasterSketch, cfg: &LatticeConfig) -> Result<SketchLattice> {
    cfg.validate()?;
    if !raster.is_canonical(cfg.side) {
        return Err(Error::InvalidImage(format!(
            "raster is {}x{}, expected {}x{}",
            raster.width(),
            raster.height(),
            cfg.side,
            cfg.side
        )));
    }
    let positions = line_positions(cfg);
    let mut on_line = vec![false; cfg.side];
    for &p in &positions {
        on_line[p] = true;
    }
    let mut points = Vec::new();
    for y in 0..cfg.side {
        if on_line[y] {
            // whole row is a horizontal lattice line
            points.extend((0..cfg.side).filter(|&x| raster.get(x, y)).map(|x| Point::new(x as u32, y as u32)));
        } else {
            points.extend(
                positions
                    .iter()
                    .filter(|&&x| raster.get(x, y))
                    .map(|&x| Point::new(x as u32, y as u32)),
            );
        }
    }
    Ok(SketchLattice { side: cfg.side, n: cfg.n, points })
}

/// Drops each point independently with probability `p_mask`, preserving order.
pub fn mask_lattice<R: Rng + ?Sized>(lattice: &SketchLattice, p_mask: f64, rng: &mut R) -> SketchLattice {
    assert!((0.0..=1.0).contains(&p_mask), "p_mask must lie in [0, 1]");
    let points = lattice
        .points
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= p_mask)
        .collect();
    SketchLattice { side: lattice.side, n: lattice.n, points }
}
