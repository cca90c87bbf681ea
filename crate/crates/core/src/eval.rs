//! Healing, retrieval and edge-map synthesis harnesses.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::reparameterize_with_noise;
use crate::error::{Error, Result};
use crate::lattice::SketchLattice;
use crate::model::Model;
use crate::sketch_data::{rasterize, RasterSketch, VectorSketch};

#[derive(Clone, Debug)]
pub struct HealRequest {
    pub raster: RasterSketch,
    pub p_mask: f64,
    /// Lattice grid; the model's default when `None`.
    pub n: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HealOutput {
    pub sketch: VectorSketch,
    /// Points that survived masking.
    pub lattice: SketchLattice,
    pub psi: Array1<f64>,
    pub z: Array1<f64>,
}

/// Raster → lattice → mask → graph → `Ψ` → `z` (with noise) → generated sketch.
/// Masking draws from stream 0 of the seed and latent noise plus decoding from
/// stream 1, so `p_mask = 0` reproduces the unmasked path exactly.
pub fn heal(req: &HealRequest, model: &Model) -> Result<HealOutput> {
    if !(0.0..=1.0).contains(&req.p_mask) {
        return Err(Error::Config(format!("p_mask {} must lie in [0, 1]", req.p_mask)));
    }
    let mut mask_rng = stream(req.seed, 0);
    let lattice = model.lattice_of(&req.raster, req.n, req.p_mask, &mut mask_rng)?;
    if lattice.is_empty() {
        return Err(Error::EmptyLattice);
    }
    let psi = model.embed_graph(&model.graph(&lattice)?)?;
    let mut gen_rng = stream(req.seed, 1);
    let eps = Array1::from_shape_simple_fn(psi.len(), || StandardNormal.sample(&mut gen_rng));
    let latent = reparameterize_with_noise(psi.view(), &model.params.encoder, eps.view());
    let sketch = model.generate(latent.z.view(), &mut gen_rng)?;
    Ok(HealOutput { sketch, lattice, psi, z: latent.z })
}

/// Edge map → sketch: the healing pipeline without masking.
pub fn edge_to_sketch(edges: &RasterSketch, model: &Model, n: Option<usize>, seed: u64) -> Result<HealOutput> {
    heal(&HealRequest { raster: edges.clone(), p_mask: 0.0, n, seed }, model)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// L2-normalized eval-mode embeddings of the rasters that produced a
/// non-empty lattice.
#[derive(Clone, Debug)]
pub struct Gallery {
    pub rows: Array2<f64>,
    /// Input index of each row.
    pub kept: Vec<usize>,
    /// Inputs whose lattice was empty.
    pub failures: Vec<usize>,
}

pub fn embed_gallery(rasters: &[RasterSketch], model: &Model, n: Option<usize>) -> Result<Gallery> {
    if rasters.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let d = model.config.encoder.d;
    let mut rows = Vec::new();
    let mut kept = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in rasters.iter().enumerate() {
        match model.embed_raster(r, n) {
            Ok(psi) => {
                rows.extend(normalized(psi));
                kept.push(i);
            }
            Err(Error::EmptyLattice) => failures.push(i),
            Err(e) => return Err(e),
        }
    }
    let rows = Array2::from_shape_vec((kept.len(), d), rows).expect("rows have width d");
    Ok(Gallery { rows, kept, failures })
}

fn normalized(v: Array1<f64>) -> Array1<f64> {
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v / norm
    } else {
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    /// Gallery indices by decreasing cosine similarity, per query.
    pub rankings: Vec<Vec<usize>>,
    pub top1: f64,
    pub top3: f64,
    /// `confusion[true][predicted]` using the top-ranked gallery label.
    pub confusion: Vec<Vec<usize>>,
}

/// Cosine-similarity retrieval. A query hits at `k` when any of its `k`
/// best-ranked gallery items shares its label; equal similarities keep gallery
/// order. `exclude[i]`, when given, removes that gallery item from query `i`'s
/// ranking.
pub fn retrieve(
    queries: ArrayView2<f64>,
    query_labels: &[usize],
    gallery: ArrayView2<f64>,
    gallery_labels: &[usize],
    exclude: Option<&[Option<usize>]>,
) -> Result<RetrievalReport> {
    if queries.ncols() != gallery.ncols() || queries.nrows() != query_labels.len() || gallery.nrows() != gallery_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "queries {:?} with {} labels vs gallery {:?} with {} labels",
            queries.dim(),
            query_labels.len(),
            gallery.dim(),
            gallery_labels.len()
        )));
    }
    if exclude.is_some_and(|e| e.len() != queries.nrows()) {
        return Err(Error::ShapeMismatch("one exclusion entry per query is required".into()));
    }
    let unit = |m: ArrayView2<f64>| {
        let mut m = m.to_owned();
        for mut row in m.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        m
    };
    let sims = unit(queries).dot(&unit(gallery).t());
    let classes = query_labels.iter().chain(gallery_labels).max().map_or(0, |m| m + 1);
    let mut confusion = vec![vec![0; classes]; classes];
    let (mut hit1, mut hit3) = (0usize, 0usize);
    let mut rankings = Vec::with_capacity(queries.nrows());
    for (q, row) in sims.axis_iter(Axis(0)).enumerate() {
        let skip = exclude.and_then(|e| e[q]);
        let mut order: Vec<usize> = (0..gallery.nrows()).filter(|&g| Some(g) != skip).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        let label = query_labels[q];
        if let Some(&best) = order.first() {
            confusion[label][gallery_labels[best]] += 1;
        }
        hit1 += order.iter().take(1).any(|&g| gallery_labels[g] == label) as usize;
        hit3 += order.iter().take(3).any(|&g| gallery_labels[g] == label) as usize;
        rankings.push(order);
    }
    let n = queries.nrows().max(1) as f64;
    Ok(RetrievalReport { rankings, top1: hit1 as f64 / n, top3: hit3 as f64 / n, confusion })
}

/// Raster-to-label plug-in for recognition-style scoring of generated sketches.
pub trait SketchClassifier {
    fn classify(&self, raster: &RasterSketch) -> Result<usize>;
}

/// Labels a raster by the nearest class-mean embedding (cosine).
pub struct NearestCentroid<'a> {
    pub model: &'a Model,
    pub centroids: Array2<f64>,
    pub n: Option<usize>,
}

impl<'a> NearestCentroid<'a> {
    pub fn fit(model: &'a Model, rasters: &[RasterSketch], labels: &[usize], n: Option<usize>) -> Result<Self> {
        let gallery = embed_gallery(rasters, model, n)?;
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut centroids = Array2::zeros((classes, model.config.encoder.d));
        for (row, &i) in gallery.rows.rows().into_iter().zip(&gallery.kept) {
            let mut c = centroids.row_mut(labels[i]);
            c += &row;
        }
        Ok(NearestCentroid { model, centroids, n })
    }
}

impl SketchClassifier for NearestCentroid<'_> {
    fn classify(&self, raster: &RasterSketch) -> Result<usize> {
        let psi = normalized(self.model.embed_raster(raster, self.n)?);
        let scores = self.centroids.dot(&psi);
        let norms = self.centroids.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-300));
        let cos = scores / norms;
        Ok((0..cos.len()).fold(0, |best, k| if cos[k] > cos[best] { k } else { best }))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub p_mask: f64,
    pub top1: f64,
    pub top3: f64,
    /// Mean lattice size after masking.
    pub mean_points: f64,
    /// Items whose healing failed or produced an empty sketch.
    pub failures: usize,
    pub queries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub gallery_size: usize,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_mask,top1,top3,mean_points,failures\n");
        for r in &self.rows {
            out += &format!("{},{:.6},{:.6},{:.4},{}\n", r.p_mask, r.top1, r.top3, r.mean_points, r.failures);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>7} {:>7} {:>7} {:>11} {:>9}   (gallery {})\n",
            "p_mask", "top1", "top3", "mean_points", "failures", self.gallery_size
        );
        for r in &self.rows {
            out += &format!(
                "{:>7.2} {:>7.3} {:>7.3} {:>11.1} {:>5}/{:<3}\n",
                r.p_mask, r.top1, r.top3, r.mean_points, r.failures, r.queries
            );
        }
        out
    }
}

/// For each corruption level, heals every test raster, rasterizes and embeds
/// the result and retrieves it against the clean embeddings of the test set
/// (its own source excluded). Failed items count as misses. Item `i` heals
/// with seed `seed + i`.
pub fn healing_sweep(
    test: &[RasterSketch],
    labels: &[usize],
    model: &Model,
    p_masks: &[f64],
    n: Option<usize>,
    seed: u64,
) -> Result<SweepReport> {
    if test.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} rasters with {} labels", test.len(), labels.len())));
    }
    let gallery = embed_gallery(test, model, n)?;
    let gallery_labels: Vec<usize> = gallery.kept.iter().map(|&i| labels[i]).collect();
    let position: std::collections::HashMap<usize, usize> =
        gallery.kept.iter().enumerate().map(|(row, &i)| (i, row)).collect();
    let side = model.config.side;
    let mut rows = Vec::with_capacity(p_masks.len());
    for &p_mask in p_masks {
        let mut query_rows = Vec::new();
        let mut query_labels = Vec::new();
        let mut exclude = Vec::new();
        let mut failures = 0;
        let mut points = 0usize;
        for (i, raster) in test.iter().enumerate() {
            let req = HealRequest { raster: raster.clone(), p_mask, n, seed: seed.wrapping_add(i as u64) };
            let healed = match heal(&req, model) {
                Ok(h) => h,
                Err(Error::EmptyLattice) => {
                    failures += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            points += healed.lattice.len();
            if healed.sketch.is_empty() {
                failures += 1;
                continue;
            }
            match model.embed_raster(&rasterize(&healed.sketch, side), n) {
                Ok(psi) => {
                    query_rows.extend(normalized(psi));
                    query_labels.push(labels[i]);
                    exclude.push(position.get(&i).copied());
                }
                Err(Error::EmptyLattice) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        let q = Array2::from_shape_vec((query_labels.len(), model.config.encoder.d), query_rows)
            .expect("rows have width d");
        let report = retrieve(q.view(), &query_labels, gallery.rows.view(), &gallery_labels, Some(&exclude))?;
        let total = test.len().max(1) as f64;
        let answered = query_labels.len() as f64;
        rows.push(SweepRow {
            p_mask,
            top1: report.top1 * answered / total,
            top3: report.top3 * answered / total,
            mean_points: points as f64 / total,
            failures,
            queries: test.len(),
        });
    }
    Ok(SweepReport { rows, gallery_size: gallery.kept.len() })
}

#[cfg(test)]
mod tests;
