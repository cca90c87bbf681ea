//! Writes a small two-category dataset in QuickDraw JSON-lines format:
//! hand-drawn-looking circles and squares on a 0..=255 canvas.
//!
//! Usage: `cargo run --example make_toy_quickdraw -- OUT_DIR [COUNT] [SEED]`

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Polyline = (Vec<i64>, Vec<i64>);

fn clamp(v: f64) -> i64 {
    v.round().clamp(0.0, 255.0) as i64
}

fn circle(rng: &mut ChaCha8Rng) -> Vec<Polyline> {
    let r = rng.random_range(60.0..120.0);
    let (cx, cy) = (rng.random_range(r..255.0 - r), rng.random_range(r..255.0 - r));
    let squash = rng.random_range(0.85..1.15);
    let start = rng.random_range(0.0..TAU);
    let sweep = TAU * rng.random_range(0.95..1.08);
    let n = rng.random_range(14..22);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..=n {
        let a = start + sweep * k as f64 / n as f64;
        let jitter = rng.random_range(-0.04..0.04) * r;
        xs.push(clamp(cx + (r + jitter) * a.cos() * squash));
        ys.push(clamp(cy + (r + jitter) * a.sin() / squash));
    }
    vec![(xs, ys)]
}

fn square(rng: &mut ChaCha8Rng) -> Vec<Polyline> {
    let half = rng.random_range(55.0..115.0);
    let (cx, cy) = (rng.random_range(half..255.0 - half), rng.random_range(half..255.0 - half));
    let tilt: f64 = rng.random_range(-0.12..0.12);
    let aspect = rng.random_range(0.85..1.15);
    let corners: Vec<(f64, f64)> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(u, v)| {
            let (x, y) = (u * half * aspect, v * half / aspect);
            let (x, y) = (x * tilt.cos() - y * tilt.sin(), x * tilt.sin() + y * tilt.cos());
            (cx + x + rng.random_range(-4.0..4.0), cy + y + rng.random_range(-4.0..4.0))
        })
        .collect();
    let mut points = Vec::new();
    for k in 0..=4 {
        let a = corners[k % 4];
        points.push(a);
        if k < 4 {
            let b = corners[(k + 1) % 4];
            let mids = rng.random_range(0..3);
            for m in 1..=mids {
                let t = m as f64 / (mids + 1) as f64;
                points.push((
                    a.0 + (b.0 - a.0) * t + rng.random_range(-2.5..2.5),
                    a.1 + (b.1 - a.1) * t + rng.random_range(-2.5..2.5),
                ));
            }
        }
    }
    let to_line = |pts: &[(f64, f64)]| -> Polyline {
        (pts.iter().map(|p| clamp(p.0)).collect(), pts.iter().map(|p| clamp(p.1)).collect())
    };
    if rng.random_bool(0.3) {
        // drawn as two strokes split at a corner
        let split = points.len() / 2;
        vec![to_line(&points[..=split]), to_line(&points[split..])]
    } else {
        vec![to_line(&points)]
    }
}

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let count: usize = args.next().map_or(350, |s| s.parse().expect("COUNT must be an integer"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("SEED must be an integer"));
    std::fs::create_dir_all(&out)?;
    let kinds = [("circle", circle as fn(&mut ChaCha8Rng) -> Vec<Polyline>), ("square", square)];
    for (k, (word, draw)) in kinds.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut w = BufWriter::new(File::create(out.join(format!("{word}.ndjson")))?);
        for i in 0..count {
            let strokes = draw(&mut rng);
            let record = serde_json::json!({
                "word": word,
                "key_id": format!("{word}-{i:05}"),
                "recognized": true,
                "drawing": strokes.iter().map(|(xs, ys)| serde_json::json!([xs, ys])).collect::<Vec<_>>(),
            });
            writeln!(w, "{record}")?;
        }
        w.flush()?;
    }
    Ok(())
}
