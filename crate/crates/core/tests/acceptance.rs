//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when all
//! checks pass. Exits non-zero if any criterion fails. The training criterion
//! takes roughly half an hour on one core; `ACCEPTANCE_SKIP_TRAINING=1` skips
//! it and the two criteria that depend on its model.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchlattice::audit::{finite_diff_audit, small_audit_setup};
use sketchlattice::dataset::{Dataset, Split};
use sketchlattice::decoder::{gmm_nll, DecoderConfig, MixtureParams};
use sketchlattice::encoder::{count_parameters, parameter_count_closed_form, EncoderConfig, EncoderParams};
use sketchlattice::eval::{heal, healing_sweep, HealRequest};
use sketchlattice::graph::normalized_distance;
use sketchlattice::model::PreparedSketch;
use sketchlattice::sketch_data::{rasterize, render_svg};
use sketchlattice::train::{fit, smoothed_loss, FitReport, OptimizerState, TrainConfig};
use sketchlattice::{
    build_adjacency, sample_lattice, EmbedMode, GraphConfig, LatticeConfig, Model, ModelConfig, Point, Proximity,
    RasterSketch, SketchLattice,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

// ---- 1: lattice sampling against a pixel scan ----

/// Line positions with exact integer arithmetic: the pixel nearest to the
/// centre of each of `n` equal bands, ties going to the lower pixel.
fn oracle_lines(n: usize, side: usize) -> Vec<usize> {
    (0..n)
        .map(|k| {
            // ceil(((2k+1)·side − n) / 2n)
            let num = ((2 * k + 1) * side) as i64 - n as i64;
            let den = (2 * n) as i64;
            num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0)
        })
        .map(|p| p as usize)
        .collect()
}

fn oracle_scan(raster: &RasterSketch, n: usize, side: usize) -> Vec<Point> {
    let lines = oracle_lines(n, side);
    let mut out = Vec::new();
    for y in 0..side {
        for x in 0..side {
            if raster.get(x, y) && (lines.contains(&x) || lines.contains(&y)) {
                out.push(Point::new(x as u32, y as u32));
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let side = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rasters = vec![
        RasterSketch::blank(side, side),
        RasterSketch::from_pixels(side, side, vec![1; side * side]).unwrap(),
    ];
    let mut single = RasterSketch::blank(side, side);
    single.set(rng.random_range(0..side), rng.random_range(0..side), true);
    rasters.push(single);
    while rasters.len() < 200 {
        let density: f64 = rng.random_range(0.0..0.6);
        let mut r = RasterSketch::blank(side, side);
        for y in 0..side {
            for x in 0..side {
                if rng.random::<f64>() < density {
                    r.set(x, y, true);
                }
            }
        }
        rasters.push(r);
    }
    let mut mismatches = 0;
    for n in [1, 2, 4, 8, 16, 32, 64] {
        let cfg = LatticeConfig::new(n, side).unwrap();
        for r in &rasters {
            if sample_lattice(r, &cfg).unwrap().points != oracle_scan(r, n, side) {
                mismatches += 1;
            }
        }
    }
    let full = sample_lattice(&rasters[1], &LatticeConfig::new(32, side).unwrap()).unwrap().len();
    outcome(mismatches == 0 && full == 15360, format!("{mismatches} mismatches over 1400 cases, all-ones m = {full}"))
}

// ---- 2: adjacency properties ----

fn random_lattice(rng: &mut ChaCha8Rng) -> SketchLattice {
    let m = rng.random_range(1..60);
    let mut pts: Vec<Point> = (0..m).map(|_| Point::new(rng.random_range(0..256), rng.random_range(0..256))).collect();
    pts.sort_by_key(|p| (p.y, p.x));
    pts.dedup();
    SketchLattice { side: 256, n: 32, points: pts }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let thresholds = [0.05, 0.1, 0.2, 0.4, 0.8];
    let mut problems = Vec::new();
    let mut strict_steps = 0;
    for case in 0..100 {
        let lattice = random_lattice(&mut rng);
        let mut previous: Option<Vec<bool>> = None;
        let mut previous_count = 0;
        for (mode, ts) in [(Proximity::Nearest, &[0.2][..]), (Proximity::Nearby, &thresholds[..])] {
            for &t in ts {
                let cfg = GraphConfig { proximity: mode, distance_threshold: t, ..GraphConfig::default() };
                let a = build_adjacency(&lattice, &cfg).unwrap().adjacency;
                let m = lattice.len();
                let mut support = vec![false; m * m];
                for i in 0..m {
                    if a[[i, i]] != 1.0 {
                        problems.push(format!("case {case}: diagonal {}", a[[i, i]]));
                    }
                    for j in 0..m {
                        let v = a[[i, j]];
                        if v != a[[j, i]] || !(0.0..=1.0).contains(&v) {
                            problems.push(format!("case {case}: entry ({i},{j}) = {v}"));
                        }
                        if i != j && v != 0.0 {
                            support[i * m + j] = true;
                            let (p, q) = (lattice.points[i], lattice.points[j]);
                            let d = ((p.x as f64 - q.x as f64).powi(2) + (p.y as f64 - q.y as f64).powi(2)).sqrt();
                            let expect = 1.0 - d / (256.0 * 2f64.sqrt());
                            if (v - expect).abs() > 1e-9 {
                                problems.push(format!("case {case}: strength {v} vs {expect}"));
                            }
                        }
                    }
                }
                if mode == Proximity::Nearby {
                    let count = support.iter().filter(|&&s| s).count();
                    if let Some(prev) = &previous {
                        if prev.iter().zip(&support).any(|(&a, &b)| a && !b) || count < previous_count {
                            problems.push(format!("case {case}: support shrank at d_T = {t}"));
                        }
                        strict_steps += usize::from(count > previous_count);
                    }
                    previous = Some(support);
                    previous_count = count;
                }
            }
        }
    }
    let helper_ok = (normalized_distance(100.0, 256) - 100.0 / (256.0 * 2f64.sqrt())).abs() < 1e-15;
    let pass = problems.is_empty() && helper_ok && strict_steps > 0;
    let detail = match problems.first() {
        Some(p) => format!("{} violations, first: {p}", problems.len()),
        None => format!("100 lattices clean; support grew strictly at {strict_steps} threshold steps"),
    };
    outcome(pass, detail)
}

// ---- 3: gradient audit ----

fn criterion_3() -> Outcome {
    let (model, items, noise) = small_audit_setup(3).unwrap();
    let report = finite_diff_audit(&model, &items, &noise, 1e-4).unwrap();
    let groups = [
        "encoder.embedding",
        "encoder.layer",
        "encoder.fc",
        "encoder.bn",
        "encoder.mu",
        "encoder.sigma",
        "decoder.lstm",
        "decoder.head",
    ];
    let missing: Vec<&str> = groups.iter().copied().filter(|g| !report.arrays.iter().any(|a| a.name.starts_with(g))).collect();
    let worst = report.arrays.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).unwrap();
    outcome(
        missing.is_empty() && report.worst() < 1e-3,
        format!("{} arrays, worst {} rel error {:.2e}, missing groups {missing:?}", report.arrays.len(), worst.name, worst.rel_error),
    )
}

// ---- 4: analytic NLL ----

fn criterion_4() -> Outcome {
    let mp = MixtureParams::from_raw(&[0.0; 9], 1);
    let two_pi = (2.0 * std::f64::consts::PI).ln();
    let at_mean = gmm_nll(&mp, &[0.0, 0.0, 1.0, 0.0, 0.0]).offset;
    let at_one = gmm_nll(&mp, &[1.0, 0.0, 1.0, 0.0, 0.0]).offset;
    outcome(
        (at_mean - two_pi).abs() < 1e-6 && (at_one - two_pi - 0.5).abs() < 1e-6,
        format!("nll(0,0) = {at_mean:.9}, nll(1,0) = {at_one:.9}, ln 2π = {two_pi:.9}"),
    )
}

// ---- 5: permutation invariance ----

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = ModelConfig {
        encoder: EncoderConfig { d: 32, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 16, mixtures: 2, ..DecoderConfig::default() },
        ..ModelConfig::default()
    };
    let mut model = Model::new(cfg, &mut rng).unwrap();
    let d = model.config.encoder.d;
    let mean = Array1::from_shape_simple_fn(d, || rng.random_range(-0.5..0.5));
    let var = Array1::from_shape_simple_fn(d, || rng.random_range(0.5..2.0));
    model.update_running_stats(&mean, &var);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let graph = model.graph(&random_lattice(&mut rng)).unwrap();
        let psi = model.embed_graph(&graph).unwrap();
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..graph.len()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let other = model.embed_graph(&graph.permuted(&perm)).unwrap();
            worst = worst.max((&psi - &other).fold(0.0, |a: f64, &b| a.max(b.abs())));
        }
    }
    outcome(worst < 1e-6, format!("max |ΔΨ| over 400 permutations = {worst:.2e}"))
}

// ---- 6: parameter count ----

fn criterion_6() -> Outcome {
    let cfg = EncoderConfig { d: 64, layers: 2, ..EncoderConfig::default() };
    let counted = count_parameters(&EncoderParams::zeros(&cfg)).total;
    let closed = parameter_count_closed_form(&cfg);
    let joint = parameter_count_closed_form(&EncoderConfig { embed_mode: EmbedMode::Joint, ..cfg });
    outcome(
        counted == 62_016 && closed == counted && (40_000..=100_000).contains(&counted) && joint > 100_000,
        format!("factorized {counted} (closed form {closed}); joint vocabulary {joint}, outside 0.04M..0.10M"),
    )
}

// ---- 7-9: desk-scale training, healing, determinism ----

struct Desk {
    data: Dataset,
    prepared: Vec<PreparedSketch>,
    model: Model,
    initial: (Model, OptimizerState),
    train_cfg: TrainConfig,
    report: FitReport,
    dir: tempfile::TempDir,
    seconds: f64,
}

fn desk_setup() -> Desk {
    let mut data = Dataset::load(&[repo_path("data/circle.ndjson"), repo_path("data/square.ndjson")]).unwrap();
    data.retain_fitting(200);
    data.assign_splits(50, 0);
    let categories = data.categories();
    let train = data.subset(Split::Train);
    let cfg = ModelConfig {
        encoder: EncoderConfig { d: 64, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 256, ..DecoderConfig::default() },
        offset_scale: train.offset_scale(),
        ..ModelConfig::default()
    };
    let prepared = train.prepare(&cfg, &categories, 1).unwrap();
    let mut init_rng = ChaCha8Rng::seed_from_u64(0);
    init_rng.set_stream(u64::MAX);
    let mut model = Model::new(cfg, &mut init_rng).unwrap();
    let mut opt = OptimizerState::new(&model.params);
    let initial = (model.clone(), opt.clone());
    let train_cfg = TrainConfig { batch_size: 32, iterations: 5000, seed: 0, ..TrainConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let report = fit(&prepared, &mut model, &mut opt, &train_cfg, &dir.path().join("full"), |_| {}).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    Desk { data, prepared, model, initial, train_cfg, report, dir, seconds }
}

fn criterion_7(desk: &Desk) -> Outcome {
    let train = desk.data.subset(Split::Train);
    let per_category: Vec<usize> =
        desk.data.categories().iter().map(|c| train.items.iter().filter(|it| &it.word == c).count()).collect();
    let w100 = smoothed_loss(&desk.report.losses, 100, 100).unwrap();
    let w5000 = smoothed_loss(&desk.report.losses, 5000, 100).unwrap();
    // relative to the magnitude of the early window, since the loss may cross zero
    let drop = (w100 - w5000) / w100.abs();
    outcome(
        drop >= 0.30 && per_category.iter().all(|&n| n == 300),
        format!(
            "window@100 {w100:.4}, window@5000 {w5000:.4}, drop {:.0}% ({per_category:?} train per category, {:.0} s)",
            100.0 * drop,
            desk.seconds
        ),
    )
}

fn criterion_8(desk: &Desk) -> Outcome {
    let categories = desk.data.categories();
    let test = desk.data.subset(Split::Test);
    let rasters: Vec<RasterSketch> = test.items.iter().map(|it| rasterize(&it.sketch, 256)).collect();
    let labels: Vec<usize> = test.items.iter().map(|it| Dataset::label_of(&categories, &it.word).unwrap()).collect();
    let sweep = healing_sweep(&rasters, &labels, &desk.model, &[0.1, 0.3], None, 0).unwrap();
    let (r1, r3) = (&sweep.rows[0], &sweep.rows[1]);
    let drop = r1.top1 - r3.top1;
    outcome(
        r1.top1 >= 0.65 && drop <= 0.15 + 1e-12,
        format!(
            "top1 {:.2} at p_mask 0.1, {:.2} at 0.3 (drop {:.0} points) over {} test sketches",
            r1.top1,
            r3.top1,
            100.0 * drop,
            r1.queries
        ),
    )
}

fn criterion_9(desk: &Desk) -> Outcome {
    let (mut model, mut opt) = desk.initial.clone();
    let cfg = TrainConfig { iterations: 200, ..desk.train_cfg.clone() };
    let out = desk.dir.path().join("repeat");
    fit(&desk.prepared, &mut model, &mut opt, &cfg, &out, |_| {}).unwrap();
    let full = std::fs::read_to_string(desk.dir.path().join("full/loss.csv")).unwrap();
    let repeat = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let head: String = full.lines().take(201).map(|l| format!("{l}\n")).collect();
    let csv_same = head == repeat && repeat.lines().count() == 201;

    let raster = rasterize(&desk.data.subset(Split::Test).items[0].sketch, 256);
    let req = HealRequest { raster, p_mask: 0.3, n: None, seed: 11 };
    let svg = |m: &Model| render_svg(&heal(&req, m).unwrap().sketch).into_bytes();
    let reloaded = Model::load(&desk.report.final_checkpoint).unwrap();
    let a = svg(&desk.model);
    let svg_same = a == svg(&desk.model) && a == svg(&reloaded);
    outcome(
        csv_same && svg_same,
        format!("200-iteration loss CSV identical: {csv_same}; heal SVG identical (incl. reloaded checkpoint): {svg_same}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{status}] {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "lattice sampling oracle", criterion_1());
    report(2, "adjacency properties", criterion_2());
    report(3, "gradient audit", criterion_3());
    report(4, "analytic mixture NLL", criterion_4());
    report(5, "permutation invariance", criterion_5());
    report(6, "encoder parameter count", criterion_6());
    if std::env::var_os("ACCEPTANCE_SKIP_TRAINING").is_some() {
        println!("criteria 7-9 skipped (ACCEPTANCE_SKIP_TRAINING set)");
    } else {
        let desk = desk_setup();
        report(7, "desk-scale training", criterion_7(&desk));
        report(8, "healing retrieval trend", criterion_8(&desk));
        report(9, "determinism", criterion_9(&desk));
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
