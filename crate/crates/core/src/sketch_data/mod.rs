//! Vector and raster sketch formats: QuickDraw ingestion, stroke-5 encoding,
//! rasterization and SVG/PGM export.

mod line;
mod quickdraw;
mod raster;
mod svg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use line::line_pixels;
pub use quickdraw::{parse_quickdraw_line, QuickDrawRecord};
pub use raster::{rasterize, RasterSketch, CANVAS_SIDE, RASTER_MARGIN};
pub use svg::{parse_svg_polylines, render_svg};

/// Pen state attached to a step.
///
/// `Down` draws a segment from the previous position to the new one, `Lift`
/// moves without drawing, and `End` terminates the sketch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pen {
    Down,
    Lift,
    End,
}

impl Pen {
    pub fn index(self) -> usize {
        match self {
            Pen::Down => 0,
            Pen::Lift => 1,
            Pen::End => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Pen> {
        match i {
            0 => Some(Pen::Down),
            1 => Some(Pen::Lift),
            2 => Some(Pen::End),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub dx: f64,
    pub dy: f64,
    pub pen: Pen,
}

impl Step {
    pub fn new(dx: f64, dy: f64, pen: Pen) -> Self {
        Step { dx, dy, pen }
    }
}

/// Ordered offset sequence anchored at the origin.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorSketch {
    pub steps: Vec<Step>,
}

impl VectorSketch {
    pub fn new(steps: Vec<Step>) -> Self {
        VectorSketch { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the two structural invariants: at most one `End`, placed last,
    /// and at least one `Down` step in any non-empty sketch.
    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.steps.iter().position(|s| s.pen == Pen::End) {
            if pos + 1 != self.steps.len() {
                return Err(Error::MalformedRecord(format!(
                    "end-of-sketch at step {pos} is not the final step"
                )));
            }
        }
        if !self.steps.is_empty() && !self.steps.iter().any(|s| s.pen == Pen::Down) {
            return Err(Error::MalformedRecord("sketch has no pen-down step".into()));
        }
        if self.steps.iter().any(|s| !s.dx.is_finite() || !s.dy.is_finite()) {
            return Err(Error::MalformedRecord("non-finite offset".into()));
        }
        Ok(())
    }

    /// Multiplies every offset by `factor`.
    pub fn scaled(&self, factor: f64) -> VectorSketch {
        VectorSketch {
            steps: self
                .steps
                .iter()
                .map(|s| Step::new(s.dx * factor, s.dy * factor, s.pen))
                .collect(),
        }
    }

    /// Absolute positions after each step, starting from the origin anchor.
    pub fn absolute_points(&self) -> Vec<(f64, f64)> {
        let (mut x, mut y) = (0.0, 0.0);
        self.steps
            .iter()
            .map(|s| {
                x += s.dx;
                y += s.dy;
                (x, y)
            })
            .collect()
    }

    /// Maximal pen-down runs as absolute polylines. A run starts at the
    /// position preceding its first `Down` step; a zero-length `Down` step on
    /// its own yields a one-point polyline.
    pub fn polylines(&self) -> Vec<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        let mut current: Vec<(f64, f64)> = Vec::new();
        let (mut x, mut y) = (0.0, 0.0);
        for s in &self.steps {
            match s.pen {
                Pen::Down => {
                    if current.is_empty() {
                        current.push((x, y));
                    }
                    x += s.dx;
                    y += s.dy;
                    if s.dx != 0.0 || s.dy != 0.0 {
                        current.push((x, y));
                    }
                }
                Pen::Lift => {
                    if !current.is_empty() {
                        out.push(std::mem::take(&mut current));
                    }
                    x += s.dx;
                    y += s.dy;
                }
                Pen::End => break,
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
        out
    }

    /// Inverse of [`VectorSketch::polylines`] up to the origin anchor: the
    /// first point of the first polyline becomes the anchor.
    pub fn from_polylines(polylines: &[Vec<(f64, f64)>]) -> VectorSketch {
        let mut steps = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for line in polylines.iter().filter(|l| !l.is_empty()) {
            for (k, &(x, y)) in line.iter().enumerate() {
                match prev {
                    None => {
                        prev = Some((x, y));
                    }
                    Some((px, py)) => {
                        let pen = if k == 0 { Pen::Lift } else { Pen::Down };
                        steps.push(Step::new(x - px, y - py, pen));
                        prev = Some((x, y));
                    }
                }
            }
            if line.len() == 1 {
                steps.push(Step::new(0.0, 0.0, Pen::Down));
            }
        }
        if !steps.is_empty() {
            steps.push(Step::new(0.0, 0.0, Pen::End));
        }
        VectorSketch { steps }
    }

    /// QuickDraw-style `{"drawing": [[[x...],[y...]], ...]}` record with
    /// coordinates rounded to 3 decimals.
    pub fn to_quickdraw_json(&self) -> serde_json::Value {
        let r = |v: f64| (v * 1000.0).round() / 1000.0;
        let drawing: Vec<serde_json::Value> = self
            .polylines()
            .iter()
            .map(|line| {
                let xs: Vec<f64> = line.iter().map(|p| r(p.0)).collect();
                let ys: Vec<f64> = line.iter().map(|p| r(p.1)).collect();
                serde_json::json!([xs, ys])
            })
            .collect();
        serde_json::json!({ "drawing": drawing })
    }

    /// Compact step list `{"steps": [[dx, dy, pen], ...]}` with pen codes
    /// 0 = down, 1 = lift, 2 = end.
    pub fn to_steps_json(&self) -> serde_json::Value {
        let steps: Vec<serde_json::Value> = self
            .steps
            .iter()
            .map(|s| serde_json::json!([s.dx, s.dy, s.pen.index()]))
            .collect();
        serde_json::json!({ "steps": steps })
    }

    pub fn from_steps_json(value: &serde_json::Value) -> Result<VectorSketch> {
        let arr = value
            .get("steps")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::MalformedRecord("missing \"steps\" array".into()))?;
        let mut steps = Vec::with_capacity(arr.len());
        for row in arr {
            let row = row
                .as_array()
                .filter(|r| r.len() == 3)
                .ok_or_else(|| Error::MalformedRecord("step must be [dx, dy, pen]".into()))?;
            let num = |v: &serde_json::Value| {
                v.as_f64()
                    .ok_or_else(|| Error::MalformedRecord("non-numeric step field".into()))
            };
            let pen = row[2]
                .as_u64()
                .and_then(|p| Pen::from_index(p as usize))
                .ok_or_else(|| Error::MalformedRecord("pen code must be 0, 1 or 2".into()))?;
            steps.push(Step::new(num(&row[0])?, num(&row[1])?, pen));
        }
        let sketch = VectorSketch { steps };
        sketch.validate()?;
        Ok(sketch)
    }
}

/// Fixed-length `(dx, dy, p1, p2, p3)` rows with one-hot pen state.
#[derive(Clone, Debug, PartialEq)]
pub struct Stroke5Sequence {
    pub rows: Vec<[f64; 5]>,
}

pub const STROKE5_PAD: [f64; 5] = [0.0, 0.0, 0.0, 0.0, 1.0];
pub const STROKE5_START: [f64; 5] = [0.0, 0.0, 1.0, 0.0, 0.0];

impl Stroke5Sequence {
    pub fn n_max(&self) -> usize {
        self.rows.len()
    }

    /// Index of the first end-of-sketch row, if any.
    pub fn end_index(&self) -> Option<usize> {
        self.rows.iter().position(|r| r[4] == 1.0)
    }

    /// Rows up to and including the first end row.
    pub fn to_vector(&self) -> VectorSketch {
        let mut steps = Vec::new();
        for r in &self.rows {
            let pen = if r[4] == 1.0 {
                Pen::End
            } else if r[3] == 1.0 {
                Pen::Lift
            } else {
                Pen::Down
            };
            steps.push(Step::new(r[0], r[1], pen));
            if pen == Pen::End {
                break;
            }
        }
        VectorSketch { steps }
    }
}

pub fn stroke5_row(step: &Step) -> [f64; 5] {
    let mut row = [step.dx, step.dy, 0.0, 0.0, 0.0];
    row[2 + step.pen.index()] = 1.0;
    row
}

pub fn to_stroke5(sketch: &VectorSketch, n_max: usize) -> Result<Stroke5Sequence> {
    if sketch.steps.len() > n_max {
        return Err(Error::SequenceTooLong { len: sketch.steps.len(), n_max });
    }
    let mut rows: Vec<[f64; 5]> = sketch.steps.iter().map(stroke5_row).collect();
    rows.resize(n_max, STROKE5_PAD);
    Ok(Stroke5Sequence { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sketch(steps: &[(f64, f64, Pen)]) -> VectorSketch {
        VectorSketch::new(steps.iter().map(|&(x, y, p)| Step::new(x, y, p)).collect())
    }

    #[test]
    fn stroke5_padding() {
        let empty = to_stroke5(&VectorSketch::default(), 4).unwrap();
        assert_eq!(empty.rows, vec![STROKE5_PAD; 4]);

        let two = sketch(&[(1.0, 2.0, Pen::Down), (0.0, 0.0, Pen::End)]);
        let s5 = to_stroke5(&two, 2).unwrap();
        assert_eq!(s5.rows, vec![[1.0, 2.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]]);

        let three = sketch(&[(1.0, 0.0, Pen::Down), (0.0, 1.0, Pen::Lift), (0.0, 0.0, Pen::End)]);
        let s5 = to_stroke5(&three, 200).unwrap();
        assert_eq!(s5.rows.len(), 200);
        assert!(s5.rows[3..].iter().all(|r| *r == STROKE5_PAD));
    }

    #[test]
    fn stroke5_rejects_long_sequence() {
        let s = sketch(&[(1.0, 0.0, Pen::Down); 5]);
        assert!(matches!(
            to_stroke5(&s, 4),
            Err(Error::SequenceTooLong { len: 5, n_max: 4 })
        ));
    }

    #[test]
    fn validate_catches_misplaced_end() {
        assert!(sketch(&[(0.0, 0.0, Pen::End), (1.0, 0.0, Pen::Down)]).validate().is_err());
        assert!(sketch(&[(1.0, 0.0, Pen::Lift), (0.0, 0.0, Pen::End)]).validate().is_err());
        assert!(sketch(&[(1.0, 0.0, Pen::Down), (0.0, 0.0, Pen::End)]).validate().is_ok());
        assert!(VectorSketch::default().validate().is_ok());
    }

    #[test]
    fn polylines_split_on_lift() {
        let s = sketch(&[
            (2.0, 0.0, Pen::Down),
            (0.0, 2.0, Pen::Down),
            (5.0, 5.0, Pen::Lift),
            (0.0, 0.0, Pen::Down),
            (0.0, 0.0, Pen::End),
        ]);
        let lines = s.polylines();
        assert_eq!(lines, vec![vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)], vec![(7.0, 7.0)]]);
        assert_eq!(VectorSketch::from_polylines(&lines).polylines(), lines);
    }

    #[test]
    fn steps_json_round_trip() {
        let s = sketch(&[(1.5, -2.0, Pen::Down), (3.0, 0.0, Pen::Lift), (0.0, 1.0, Pen::Down), (0.0, 0.0, Pen::End)]);
        let back = VectorSketch::from_steps_json(&s.to_steps_json()).unwrap();
        assert_eq!(back, s);
    }

    fn arb_row() -> impl Strategy<Value = [f64; 5]> {
        (-50i32..50, -50i32..50, 0usize..2).prop_map(|(x, y, p)| {
            let mut r = [x as f64, y as f64, 0.0, 0.0, 0.0];
            r[2 + p] = 1.0;
            r
        })
    }

    proptest! {
        #[test]
        fn stroke5_inverse_is_identity(body in prop::collection::vec(arb_row(), 0..30), pad in 0usize..10, end in any::<bool>()) {
            let mut rows = body;
            if end {
                rows.push(STROKE5_PAD);
            }
            let n_max = rows.len() + pad;
            rows.resize(n_max, STROKE5_PAD);
            let seq = Stroke5Sequence { rows };
            let back = to_stroke5(&seq.to_vector(), n_max).unwrap();
            prop_assert_eq!(back, seq);
        }
    }
}
