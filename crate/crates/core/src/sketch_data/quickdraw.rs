use serde_json::Value;

use super::{Pen, Step, VectorSketch};
use crate::error::{Error, Result};

/// One parsed line of a QuickDraw JSON-lines file.
#[derive(Clone, Debug, PartialEq)]
pub struct QuickDrawRecord {
    pub sketch: VectorSketch,
    /// The record's `"word"` field (category name), when present.
    pub word: Option<String>,
}

/// Parses a QuickDraw record. Each entry of `"drawing"` is a polyline given as
/// `[[x...], [y...]]` (an optional third timing array is ignored).
///
/// The first point of the drawing is the origin anchor and emits no step.
/// Moving to the first point of a later polyline is a `Lift` step; every
/// further point is a `Down` step. A one-point polyline adds a zero-length
/// `Down` step so that it still leaves a dot. A final `(0, 0, End)` step closes
/// any non-empty drawing.
pub fn parse_quickdraw_line(line: &str) -> Result<QuickDrawRecord> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Error::MalformedRecord(format!("invalid JSON: {e}")))?;
    let drawing = value
        .get("drawing")
        .ok_or_else(|| Error::MalformedRecord("missing \"drawing\"".into()))?
        .as_array()
        .ok_or_else(|| Error::MalformedRecord("\"drawing\" is not an array".into()))?;

    let mut polylines = Vec::with_capacity(drawing.len());
    for (i, stroke) in drawing.iter().enumerate() {
        let parts = stroke
            .as_array()
            .filter(|p| p.len() >= 2)
            .ok_or_else(|| Error::MalformedRecord(format!("stroke {i} is not [[x...],[y...]]")))?;
        let xs = coords(&parts[0], i)?;
        let ys = coords(&parts[1], i)?;
        if xs.len() != ys.len() {
            return Err(Error::MalformedRecord(format!(
                "stroke {i} has {} x and {} y coordinates",
                xs.len(),
                ys.len()
            )));
        }
        polylines.push(xs.into_iter().zip(ys).collect::<Vec<_>>());
    }

    let mut steps = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for line in polylines.iter().filter(|l| !l.is_empty()) {
        for (k, &(x, y)) in line.iter().enumerate() {
            if let Some((px, py)) = prev {
                let pen = if k == 0 { Pen::Lift } else { Pen::Down };
                steps.push(Step::new(x - px, y - py, pen));
            }
            prev = Some((x, y));
        }
        if line.len() == 1 {
            steps.push(Step::new(0.0, 0.0, Pen::Down));
        }
    }
    if !steps.is_empty() {
        steps.push(Step::new(0.0, 0.0, Pen::End));
    }

    let word = value.get("word").and_then(|w| w.as_str()).map(str::to_owned);
    Ok(QuickDrawRecord { sketch: VectorSketch::new(steps), word })
}

fn coords(v: &Value, stroke: usize) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::MalformedRecord(format!("stroke {stroke} coordinates are not an array")))?
        .iter()
        .map(|c| {
            c.as_f64()
                .filter(|c| c.is_finite())
                .ok_or_else(|| Error::MalformedRecord(format!("stroke {stroke} has a non-numeric coordinate")))
        })
        .collect()
}
