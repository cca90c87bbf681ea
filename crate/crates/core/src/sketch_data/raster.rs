use std::io::{Read, Write};

use super::{line_pixels, VectorSketch};
use crate::error::{Error, Result};

/// Canonical raster side used by the lattice sampler and the embedding vocabulary.
pub const CANVAS_SIDE: usize = 256;
/// Empty border kept around a rasterized sketch.
pub const RASTER_MARGIN: usize = 2;

/// Binary image, row-major, 1 = stroke.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterSketch {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RasterSketch {
    pub fn blank(width: usize, height: usize) -> Self {
        RasterSketch { width, height, pixels: vec![0; width * height] }
    }

    /// Builds a raster from row-major values; anything nonzero is dark.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        let pixels = pixels.into_iter().map(|p| u8::from(p != 0)).collect();
        Ok(RasterSketch { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, dark: bool) {
        self.pixels[y * self.width + x] = u8::from(dark);
    }

    pub fn dark_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn dark_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn is_canonical(&self, side: usize) -> bool {
        self.width == side && self.height == side
    }

    /// Resizes to `side`x`side` keeping the aspect ratio, centering the image
    /// and padding the short axis with background. A target pixel is dark when
    /// any source pixel in its footprint is dark, so thin strokes survive
    /// downscaling.
    pub fn canonicalize(&self, side: usize) -> RasterSketch {
        if self.is_canonical(side) {
            return self.clone();
        }
        let mut out = RasterSketch::blank(side, side);
        if self.width == 0 || self.height == 0 {
            return out;
        }
        let scale = side as f64 / self.width.max(self.height) as f64;
        let new_w = ((self.width as f64 * scale).round() as usize).clamp(1, side);
        let new_h = ((self.height as f64 * scale).round() as usize).clamp(1, side);
        let off_x = (side - new_w) / 2;
        let off_y = (side - new_h) / 2;
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        for ty in 0..new_h {
            let y0 = (ty as f64 * sy).floor() as usize;
            let y1 = (((ty + 1) as f64 * sy).ceil() as usize).clamp(y0 + 1, self.height);
            for tx in 0..new_w {
                let x0 = (tx as f64 * sx).floor() as usize;
                let x1 = (((tx + 1) as f64 * sx).ceil() as usize).clamp(x0 + 1, self.width);
                let dark = (y0..y1).any(|y| (x0..x1).any(|x| self.get(x, y)));
                if dark {
                    out.set(off_x + tx, off_y + ty, true);
                }
            }
        }
        out
    }

    /// Binary PGM (P5, maxval 255); background is written white (255) and
    /// strokes black (0).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| if p != 0 { 0 } else { 255 }).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 20);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a P5 or P2 PGM; pixels darker than half of maxval are strokes.
    pub fn read_pgm<R: Read>(mut r: R) -> Result<RasterSketch> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        parse_pgm(&data)
    }
}

fn parse_pgm(data: &[u8]) -> Result<RasterSketch> {
    let mut pos = 0;
    let mut tokens: Vec<String> = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() && data[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::InvalidImage("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    let magic = tokens[0].as_str();
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::InvalidImage(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::InvalidImage(format!("unsupported maxval {maxval}")));
    }
    let threshold = maxval as f64 / 2.0;
    let n = width * height;
    let values: Vec<usize> = match magic {
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let body = data.get(pos + 1..).unwrap_or(&[]);
            if body.len() < n {
                return Err(Error::InvalidImage(format!(
                    "expected {n} bytes of pixel data, found {}",
                    body.len()
                )));
            }
            body[..n].iter().map(|&b| b as usize).collect()
        }
        "P2" => {
            let text = String::from_utf8_lossy(&data[pos..]);
            let vals: Vec<usize> = text
                .split_ascii_whitespace()
                .take(n)
                .map(parse)
                .collect::<Result<_>>()?;
            if vals.len() < n {
                return Err(Error::InvalidImage("truncated P2 raster".into()));
            }
            vals
        }
        other => return Err(Error::InvalidImage(format!("unsupported PGM magic {other:?}"))),
    };
    let pixels = values.into_iter().map(|v| u8::from((v as f64) < threshold)).collect();
    Ok(RasterSketch { width, height, pixels })
}

/// Integer pixel coordinates of every absolute point after fitting the
/// sketch's pen-down runs into a `side`x`side` canvas with a
/// [`RASTER_MARGIN`] border, preserving aspect ratio and centering.
pub(crate) fn fitted_polylines(sketch: &VectorSketch, side: usize) -> Vec<Vec<(i32, i32)>> {
    let lines = sketch.polylines();
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in lines.iter().flatten() {
        min = (min.0.min(x), min.1.min(y));
        max = (max.0.max(x), max.1.max(y));
    }
    if lines.is_empty() {
        return Vec::new();
    }
    let margin = RASTER_MARGIN.min((side - 1) / 2) as f64;
    let avail = side as f64 - 2.0 * margin;
    let (bw, bh) = (max.0 - min.0, max.1 - min.1);
    let extent = bw.max(bh);
    let scale = if extent > 0.0 { avail / extent } else { 0.0 };
    let off_x = margin + (avail - bw * scale) / 2.0;
    let off_y = margin + (avail - bh * scale) / 2.0;
    let hi = (side - 1) as f64;
    lines
        .iter()
        .map(|line| {
            line.iter()
                .map(|&(x, y)| {
                    let px = (off_x + (x - min.0) * scale).round().clamp(0.0, hi);
                    let py = (off_y + (y - min.1) * scale).round().clamp(0.0, hi);
                    (px as i32, py as i32)
                })
                .collect()
        })
        .collect()
}

/// Renders pen-down runs as 1-pixel-wide midpoint lines on a `side`x`side`
/// canvas (see [`fitted_polylines`] for the fitting).
pub fn rasterize(sketch: &VectorSketch, side: usize) -> RasterSketch {
    assert!(side >= 2, "raster side must be at least 2");
    let mut out = RasterSketch::blank(side, side);
    for line in fitted_polylines(sketch, side) {
        if line.len() == 1 {
            out.set(line[0].0 as usize, line[0].1 as usize, true);
        }
        for w in line.windows(2) {
            for (x, y) in line_pixels(w[0].0, w[0].1, w[1].0, w[1].1) {
                out.set(x as usize, y as usize, true);
            }
        }
    }
    out
}
