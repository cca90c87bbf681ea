use std::fmt::Write;

use super::VectorSketch;

/// SVG 1.1 document with one `<path>` per pen-down run. The viewBox is the
/// bounding box of the drawn points, widened to at least one unit per axis.
pub fn render_svg(sketch: &VectorSketch) -> String {
    let lines = sketch.polylines();
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in lines.iter().flatten() {
        min = (min.0.min(x), min.1.min(y));
        max = (max.0.max(x), max.1.max(y));
    }
    if lines.is_empty() {
        min = (0.0, 0.0);
        max = (1.0, 1.0);
    }
    let w = (max.0 - min.0).max(1.0);
    let h = (max.1 - min.1).max(1.0);
    let stroke = (w.max(h) / 128.0).max(0.5);

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{:.3} {:.3} {:.3} {:.3}\">",
        min.0, min.1, w, h
    );
    for line in &lines {
        let mut d = String::new();
        for (i, &(x, y)) in line.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{}{cmd} {x:.3} {y:.3}", if i == 0 { "" } else { " " });
        }
        if line.len() == 1 {
            // zero-length segment so the dot is visible with round caps
            let _ = write!(d, " L {:.3} {:.3}", line[0].0, line[0].1);
        }
        let _ = writeln!(
            out,
            "  <path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"{stroke:.3}\" stroke-linecap=\"round\" stroke-linejoin=\"round\"/>"
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Extracts the point lists of every `<path d="...">` using absolute `M`/`L`
/// commands, the subset that [`render_svg`] emits. The duplicated point that
/// marks a dot is collapsed.
pub fn parse_svg_polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut rest = svg;
    while let Some(idx) = rest.find("<path") {
        rest = &rest[idx..];
        let Some(d_start) = rest.find(" d=\"") else { break };
        let body = &rest[d_start + 4..];
        let Some(d_end) = body.find('"') else { break };
        let d = &body[..d_end];
        let mut pts = Vec::new();
        let mut nums = d
            .split(|c: char| c.is_ascii_whitespace() || c == ',' || c == 'M' || c == 'L')
            .filter(|t| !t.is_empty())
            .filter_map(|t| t.parse::<f64>().ok());
        while let (Some(x), Some(y)) = (nums.next(), nums.next()) {
            pts.push((x, y));
        }
        if pts.len() == 2 && pts[0] == pts[1] {
            pts.truncate(1);
        }
        out.push(pts);
        rest = &body[d_end..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch_data::{parse_quickdraw_line, Pen, Step};

    #[test]
    fn empty_sketch_has_no_paths() {
        let svg = render_svg(&VectorSketch::default());
        assert!(svg.contains("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count(), 0);
    }

    #[test]
    fn one_segment_one_path() {
        let s = VectorSketch::new(vec![Step::new(4.0, 3.0, Pen::Down), Step::new(0.0, 0.0, Pen::End)]);
        let svg = render_svg(&s);
        assert_eq!(svg.matches("<path").count(), 1);
        assert!(svg.contains("viewBox=\"0.000 0.000 4.000 3.000\""));
    }

    #[test]
    fn parse_render_parse_round_trip() {
        let rec = parse_quickdraw_line(
            r#"{"drawing": [[[10.25,40,70.5],[20,80.125,30]], [[5],[5]], [[100,120],[100,90]]]}"#,
        )
        .unwrap();
        let expected = rec.sketch.polylines();
        let parsed = parse_svg_polylines(&render_svg(&rec.sketch));
        assert_eq!(parsed.len(), expected.len());
        for (a, b) in parsed.iter().zip(&expected) {
            assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(b) {
                assert!((p.0 - q.0).abs() < 1e-3 && (p.1 - q.1).abs() < 1e-3);
            }
        }
    }
}
