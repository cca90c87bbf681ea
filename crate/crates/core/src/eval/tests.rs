use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::decoder::DecoderConfig;
use crate::encoder::EncoderConfig;
use crate::model::ModelConfig;
use crate::sketch_data::{Pen, Step};

fn tiny_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        encoder: EncoderConfig { d: 8, layers: 1, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 8, mixtures: 2, n_max: 10, temperature: 0.5 },
        offset_scale: 30.0,
        ..ModelConfig::default()
    };
    let mut model = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    // bias the pen towards drawing so rollouts are non-trivial
    let w = model.params.decoder.head.bias.len();
    model.params.decoder.head.bias[w - 3] = 3.0;
    model
}

fn box_raster(x0: usize, y0: usize, x1: usize, y1: usize) -> RasterSketch {
    let mut r = RasterSketch::blank(256, 256);
    for x in x0..=x1 {
        r.set(x, y0, true);
        r.set(x, y1, true);
    }
    for y in y0..=y1 {
        r.set(x0, y, true);
        r.set(x1, y, true);
    }
    r
}

fn wedge(k: usize) -> RasterSketch {
    let s = VectorSketch::new(vec![
        Step::new(40.0 + 10.0 * k as f64, 0.0, Pen::Down),
        Step::new(0.0, 30.0 + 5.0 * k as f64, Pen::Down),
        Step::new(0.0, 0.0, Pen::End),
    ]);
    rasterize(&s, 256)
}

#[test]
fn blank_raster_and_full_mask_fail() {
    let model = tiny_model(1);
    let blank = HealRequest { raster: RasterSketch::blank(256, 256), p_mask: 0.0, n: None, seed: 0 };
    assert!(matches!(heal(&blank, &model), Err(Error::EmptyLattice)));
    let masked = HealRequest { raster: box_raster(10, 10, 200, 200), p_mask: 1.0, n: None, seed: 0 };
    assert!(matches!(heal(&masked, &model), Err(Error::EmptyLattice)));
    assert!(edge_to_sketch(&RasterSketch::blank(256, 256), &model, None, 0).is_err());
}

#[test]
fn unmasked_heal_is_the_plain_path_and_repeats() {
    let model = tiny_model(2);
    let raster = box_raster(30, 40, 220, 180);
    let a = heal(&HealRequest { raster: raster.clone(), p_mask: 0.0, n: Some(16), seed: 9 }, &model).unwrap();
    let b = edge_to_sketch(&raster, &model, Some(16), 9).unwrap();
    assert_eq!(a, b);
    let c = heal(&HealRequest { raster, p_mask: 0.3, n: Some(16), seed: 9 }, &model).unwrap();
    let d = heal(&HealRequest { raster: box_raster(30, 40, 220, 180), p_mask: 0.3, n: Some(16), seed: 9 }, &model).unwrap();
    assert_eq!(c, d);
    assert!(c.lattice.points.iter().all(|p| a.lattice.points.contains(p)));
}

#[test]
fn outline_lattice_stays_on_outline() {
    let model = tiny_model(3);
    let raster = box_raster(0, 0, 255, 255);
    let out = edge_to_sketch(&raster, &model, Some(32), 1).unwrap();
    assert!(!out.lattice.is_empty());
    for p in &out.lattice.points {
        assert!(p.x == 0 || p.x == 255 || p.y == 0 || p.y == 255, "{p:?}");
    }
}

#[test]
fn gallery_rows_are_unit_and_order_preserving() {
    let model = tiny_model(4);
    let rasters: Vec<RasterSketch> = (0..4).map(wedge).collect();
    let mut with_blank = rasters.clone();
    with_blank.insert(1, RasterSketch::blank(256, 256));
    let g = embed_gallery(&with_blank, &model, None).unwrap();
    assert_eq!(g.kept, vec![0, 2, 3, 4]);
    assert_eq!(g.failures.len(), 1);
    for row in g.rows.rows() {
        assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
    }
    let twice = embed_gallery(&[rasters[2].clone(), rasters[2].clone()], &model, None).unwrap();
    assert_eq!(twice.rows.row(0), twice.rows.row(1));
    let reversed: Vec<RasterSketch> = rasters.iter().rev().cloned().collect();
    let r = embed_gallery(&reversed, &model, None).unwrap();
    let f = embed_gallery(&rasters, &model, None).unwrap();
    for i in 0..4 {
        assert_eq!(r.rows.row(i), f.rows.row(3 - i));
    }
}

#[test]
fn self_and_one_hot_retrieval_are_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Array2::from_shape_simple_fn((12, 5), || rng.random::<f64>() - 0.5);
    let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let r = retrieve(g.view(), &labels, g.view(), &labels, None).unwrap();
    assert_eq!(r.top1, 1.0);
    assert!(r.rankings.iter().enumerate().all(|(i, rank)| rank[0] == i));

    let one_hot = Array2::from_shape_fn((6, 3), |(i, j)| if i % 3 == j { 1.0 } else { 0.0 });
    let l: Vec<usize> = (0..6).map(|i| i % 3).collect();
    let exclude: Vec<Option<usize>> = (0..6).map(Some).collect();
    let r = retrieve(one_hot.view(), &l, one_hot.view(), &l, Some(&exclude)).unwrap();
    assert_eq!(r.top1, 1.0);
    assert_eq!(r.confusion, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
    assert!(r.rankings.iter().enumerate().all(|(i, rank)| !rank.contains(&i) && rank.len() == 5));
}

#[test]
fn ties_keep_gallery_order() {
    let same = Array2::ones((4, 2));
    let labels = [0, 1, 0, 1];
    let a = retrieve(same.view(), &labels, same.view(), &labels, None).unwrap();
    assert!(a.rankings.iter().all(|r| r == &vec![0, 1, 2, 3]));
    assert_eq!(a, retrieve(same.view(), &labels, same.view(), &labels, None).unwrap());
    assert!(retrieve(same.view(), &labels[..3], same.view(), &labels, None).is_err());
}

#[test]
fn random_embeddings_retrieve_at_chance() {
    let mut total = 0.0;
    let seeds = 40;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Array2::from_shape_simple_fn((100, 16), || rng.random::<f64>() - 0.5);
        let q = Array2::from_shape_simple_fn((100, 16), || rng.random::<f64>() - 0.5);
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        total += retrieve(q.view(), &labels, g.view(), &labels, None).unwrap().top1;
    }
    assert!((total / seeds as f64 - 0.1).abs() < 0.06);
}

#[test]
fn sweep_points_follow_the_masking_model() {
    let model = tiny_model(6);
    let rasters: Vec<RasterSketch> = (0..6).map(|k| box_raster(10 + 5 * k, 20, 200, 150 + 10 * k)).collect();
    let labels = vec![0, 1, 0, 1, 0, 1];
    let report = healing_sweep(&rasters, &labels, &model, &[0.0, 0.1, 0.3, 0.5], None, 3).unwrap();
    let full = report.rows[0].mean_points;
    let total_points = full * rasters.len() as f64;
    for pair in report.rows.windows(2) {
        assert!(pair[1].mean_points <= pair[0].mean_points);
    }
    for row in &report.rows[1..] {
        let expected = full * (1.0 - row.p_mask);
        let sd = (total_points * row.p_mask * (1.0 - row.p_mask)).sqrt() / rasters.len() as f64;
        assert!((row.mean_points - expected).abs() <= 3.0 * sd, "{row:?}");
    }
    let csv = report.to_csv();
    assert!(csv.starts_with("p_mask,top1,top3,mean_points,failures\n"));
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(report, healing_sweep(&rasters, &labels, &model, &[0.0, 0.1, 0.3, 0.5], None, 3).unwrap());
}

#[test]
fn unmasked_sweep_row_matches_direct_retrieval() {
    let model = tiny_model(7);
    let rasters: Vec<RasterSketch> = (0..4).map(wedge).collect();
    let labels = vec![0, 0, 1, 1];
    let report = healing_sweep(&rasters, &labels, &model, &[0.0], None, 11).unwrap();
    let gallery = embed_gallery(&rasters, &model, None).unwrap();
    let mut rows = Vec::new();
    let mut ql = Vec::new();
    let mut ex = Vec::new();
    for (i, r) in rasters.iter().enumerate() {
        let out = heal(&HealRequest { raster: r.clone(), p_mask: 0.0, n: None, seed: 11 + i as u64 }, &model).unwrap();
        if out.sketch.is_empty() {
            continue;
        }
        if let Ok(psi) = model.embed_raster(&rasterize(&out.sketch, 256), None) {
            rows.push(psi.clone() / psi.dot(&psi).sqrt());
            ql.push(labels[i]);
            ex.push(Some(i));
        }
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let q = ndarray::stack(Axis(0), &views).unwrap_or_else(|_| Array2::zeros((0, 8)));
    let direct = retrieve(q.view(), &ql, gallery.rows.view(), &labels, Some(&ex)).unwrap();
    let scale = ql.len() as f64 / 4.0;
    assert!((report.rows[0].top1 - direct.top1 * scale).abs() < 1e-12);
}

#[test]
fn nearest_centroid_labels_its_training_rasters() {
    let model = tiny_model(8);
    let a = box_raster(20, 20, 230, 230);
    let b = wedge(2);
    let clf = NearestCentroid::fit(&model, &[a.clone(), b.clone()], &[0, 1], None).unwrap();
    assert_eq!(clf.classify(&a).unwrap(), 0);
    assert_eq!(clf.classify(&b).unwrap(), 1);
}
