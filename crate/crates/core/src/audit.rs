//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decoder::DecoderConfig;
use crate::encoder::{min_relu_margin, EncoderConfig};
use crate::error::Result;
use crate::graph::SketchGraph;
use crate::lattice::{Point, SketchLattice};
use crate::model::{BatchNoise, Model, ModelConfig, TrainItem};
use crate::params::ParameterStore;
use crate::sketch_data::{stroke5_row, Pen, Step};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrayAudit {
    pub name: String,
    pub len: usize,
    pub max_abs_error: f64,
    /// `max |analytic - numeric|` over the array divided by the largest
    /// magnitude of either gradient in it, floored at `1e-6` so arrays whose
    /// gradient is pure rounding noise do not count (0 when both are
    /// identically zero).
    pub rel_error: f64,
    pub max_analytic: f64,
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub loss: f64,
    pub arrays: Vec<ArrayAudit>,
    pub analytic: ParameterStore,
    pub numeric: ParameterStore,
}

impl AuditReport {
    pub fn worst(&self) -> f64 {
        self.arrays.iter().map(|a| a.rel_error).fold(0.0, f64::max)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<32} {:>8} {:>12} {:>12}\n", "array", "size", "max_abs", "rel_error");
        for a in &self.arrays {
            out += &format!("{:<32} {:>8} {:>12.3e} {:>12.3e}\n", a.name, a.len, a.max_abs_error, a.rel_error);
        }
        out
    }
}

/// Compares the gradient of the batch objective (batch-norm statistics,
/// fixed `noise`) against central differences with step `h`.
pub fn finite_diff_audit(model: &Model, items: &[TrainItem], noise: &BatchNoise, h: f64) -> Result<AuditReport> {
    let mut analytic = model.params.zeros_like();
    let loss = model.batch_objective(items, noise, true, Some(&mut analytic))?.loss;
    let mut numeric = model.params.zeros_like();
    let mut probe = model.clone();
    let names: Vec<(String, usize)> = model.params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    for (k, (_, len)) in names.iter().enumerate() {
        for i in 0..*len {
            let original = entry(&mut probe.params, k, i);
            *entry_mut(&mut probe.params, k, i) = original + h;
            let up = probe.batch_objective(items, noise, true, None)?.loss;
            *entry_mut(&mut probe.params, k, i) = original - h;
            let down = probe.batch_objective(items, noise, true, None)?.loss;
            *entry_mut(&mut probe.params, k, i) = original;
            *entry_mut(&mut numeric, k, i) = (up - down) / (2.0 * h);
        }
    }
    let arrays = analytic
        .tensors()
        .iter()
        .zip(numeric.tensors())
        .map(|((name, a), (_, n))| {
            let max_abs_error = a.iter().zip(n.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let max_analytic = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = n.iter().fold(max_analytic, |m, v| m.max(v.abs()));
            let rel_error = if scale > 0.0 { max_abs_error / scale.max(ROUNDOFF_FLOOR) } else { 0.0 };
            ArrayAudit { name: name.clone(), len: a.len(), max_abs_error, rel_error, max_analytic }
        })
        .collect();
    Ok(AuditReport { loss, arrays, analytic, numeric })
}

fn entry(p: &mut ParameterStore, k: usize, i: usize) -> f64 {
    *entry_mut(p, k, i)
}

fn entry_mut(p: &mut ParameterStore, k: usize, i: usize) -> &mut f64 {
    p.tensors_mut().swap_remove(k).1.into_iter().nth(i).expect("index within array")
}

const KINK_MARGIN: f64 = 1e-2;
const ROUNDOFF_FLOOR: f64 = 1e-6;

/// A small random model and probe batch: width 6, hidden 8, two mixtures,
/// three graphs of at most six nodes, nonzero latent noise and random biases.
pub fn small_audit_setup(seed: u64) -> Result<(Model, Vec<TrainItem>, BatchNoise)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        encoder: EncoderConfig { d: 6, dropout: 0.0, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 8, mixtures: 2, n_max: 6, temperature: 1.0 },
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, &mut rng)?;
    let mut items = Vec::new();
    for m in [2usize, 4, 6] {
        let mut points: Vec<Point> = Vec::new();
        while points.len() < m {
            let p = Point::new(rng.random_range(0..40), rng.random_range(0..40));
            if !points.contains(&p) {
                points.push(p);
            }
        }
        points.sort_by_key(|p| (p.y, p.x));
        let graph = model.graph(&SketchLattice { side: 256, n: 32, points })?;
        let len = rng.random_range(2..=4);
        let mut target: Vec<[f64; 5]> = (0..len - 1)
            .map(|_| {
                let pen = if rng.random_bool(0.7) { Pen::Down } else { Pen::Lift };
                stroke5_row(&Step::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), pen))
            })
            .collect();
        target.push(stroke5_row(&Step::new(0.0, 0.0, Pen::End)));
        items.push(TrainItem { graph, target });
    }
    // redraw biases until no ReLU sits near its kink
    loop {
        for (name, mut t) in model.params.tensors_mut() {
            if name.ends_with("bias") || name.ends_with("beta") {
                t.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            }
        }
        let graphs: Vec<&SketchGraph> = items.iter().map(|it| &it.graph).collect();
        if min_relu_margin(&graphs, &model.params.encoder, &model.config.encoder)? > KINK_MARGIN {
            break;
        }
    }
    let noise = BatchNoise::sample(&items, &model.config, false, &mut rng);
    Ok((model, items, noise))
}
