//! Adam training loop with gradient clipping, checkpoints and a loss log.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::mask_lattice;
use crate::model::{BatchNoise, Model, PreparedSketch, TrainItem};
use crate::params::{Container, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipMode {
    /// Clamp every gradient value to `[-clip, clip]`.
    Elementwise,
    /// Rescale the whole gradient so its L2 norm is at most `clip`.
    GlobalNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Per-iteration multiplicative learning-rate decay.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub batch_size: usize,
    pub iterations: u64,
    /// Lattice masking probability applied to training items.
    pub p_mask_train: f64,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0 disables intermediate checkpoints).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            decay: 0.999,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            clip: 1.0,
            clip_mode: ClipMode::Elementwise,
            batch_size: 64,
            iterations: 1000,
            p_mask_train: 0.1,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.beta1, self.beta2, self.eps, self.clip];
        if positive.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || self.clip <= 0.0 || self.eps <= 0.0 {
            return Err(Error::Config("learning rate, betas, eps and clip must be non-negative and finite".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay {} must lie in (0, 1]", self.decay)));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("betas must be below 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_mask_train) {
            return Err(Error::Config(format!("p_mask_train {} must lie in [0, 1]", self.p_mask_train)));
        }
        Ok(())
    }

    /// `lr · decay^iter`.
    pub fn lr_at(&self, iter: u64) -> f64 {
        self.lr * self.decay.powf(iter as f64)
    }
}

/// Default schedule: `1e-3 · 0.999^iter`.
pub fn lr_schedule(iter: u64) -> f64 {
    TrainConfig::default().lr_at(iter)
}

pub fn clip_gradients(grad: &mut ParameterStore, clip: f64, mode: ClipMode) {
    match mode {
        ClipMode::Elementwise => {
            for (_, mut t) in grad.tensors_mut() {
                t.mapv_inplace(|g| g.clamp(-clip, clip));
            }
        }
        ClipMode::GlobalNorm => {
            let norm = grad
                .tensors()
                .iter()
                .flat_map(|(_, t)| t.iter().map(|g| g * g).collect::<Vec<_>>())
                .sum::<f64>()
                .sqrt();
            if norm > clip {
                let k = clip / norm;
                for (_, mut t) in grad.tensors_mut() {
                    t.mapv_inplace(|g| g * k);
                }
            }
        }
    }
}

/// Adam moments mirroring the parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: ParameterStore,
    pub v: ParameterStore,
    /// Number of updates applied so far.
    pub iteration: u64,
}

impl OptimizerState {
    pub fn new(params: &ParameterStore) -> Self {
        OptimizerState { m: params.zeros_like(), v: params.zeros_like(), iteration: 0 }
    }

    /// One Adam update with bias correction at step `iteration + 1`.
    pub fn apply(&mut self, params: &mut ParameterStore, grad: &ParameterStore, lr: f64, cfg: &TrainConfig) {
        let t = (self.iteration + 1) as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        self.m.zip_apply(grad, |m, g| *m = b1 * *m + (1.0 - b1) * g);
        self.v.zip_apply(grad, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let ms = self.m.tensors();
        let vs = self.v.tensors();
        for (((_, mut p), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(ms).zip(vs) {
            ndarray::Zip::from(&mut p).and(&m).and(&v).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
            });
        }
        self.iteration += 1;
    }

    pub fn quantize_f32(&mut self) {
        self.m.quantize_f32();
        self.v.quantize_f32();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub lr: f64,
    /// Items dropped because masking left no lattice points.
    pub skipped: usize,
}

/// Generator for iteration `iter`: independent of how many draws earlier
/// iterations consumed, so resumed runs see the same randomness.
pub fn iteration_rng(seed: u64, iter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter);
    rng
}

/// One optimization step on `batch`: mask, build graphs, encode, decode with
/// teacher forcing, backpropagate, clip and apply Adam.
pub fn train_step(
    model: &mut Model,
    opt: &mut OptimizerState,
    batch: &[&PreparedSketch],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome> {
    let mut items = Vec::with_capacity(batch.len());
    let mut skipped = 0;
    for prepared in batch {
        let lattice = mask_lattice(&prepared.lattice, cfg.p_mask_train, rng);
        if lattice.is_empty() {
            skipped += 1;
            continue;
        }
        items.push(TrainItem { graph: model.graph(&lattice)?, target: prepared.target.clone() });
    }
    if items.is_empty() {
        return Err(Error::AllItemsSkipped(batch.len()));
    }
    let noise = BatchNoise::sample(&items, &model.config, true, rng);
    let mut grad = model.params.zeros_like();
    let out = model.batch_objective(&items, &noise, true, Some(&mut grad))?;
    if !out.loss.is_finite() || !grad.all_finite() {
        return Err(Error::NonFinite(format!("loss {} at iteration {}", out.loss, opt.iteration)));
    }
    if let Some((mean, var)) = &out.batch_stats {
        model.update_running_stats(mean, var);
    }
    clip_gradients(&mut grad, cfg.clip, cfg.clip_mode);
    let lr = cfg.lr_at(opt.iteration);
    opt.apply(&mut model.params, &grad, lr, cfg);
    Ok(StepOutcome { loss: out.loss, lr, skipped })
}

/// Batch indices for iteration `iter`, drawn without replacement.
pub fn batch_indices(rng: &mut ChaCha8Rng, data_len: usize, batch_size: usize) -> Vec<usize> {
    index::sample(rng, data_len, batch_size.min(data_len)).into_vec()
}

/// Writes model, optimizer moments and training configuration.
pub fn save_training_checkpoint(path: &Path, model: &Model, opt: &OptimizerState, cfg: &TrainConfig) -> Result<()> {
    let mut meta = model.checkpoint_meta(opt.iteration);
    meta["train"] = serde_json::to_value(cfg).expect("train config serializes");
    let mut c = Container::new(meta);
    model.store_into(&mut c);
    c.insert_store(&opt.m, "adam.m.");
    c.insert_store(&opt.v, "adam.v.");
    c.write(path)
}

/// Loads a checkpoint for resuming. Missing optimizer moments start from zero.
pub fn load_training_checkpoint(path: &Path) -> Result<(Model, OptimizerState, Option<TrainConfig>)> {
    let c = Container::read(path)?;
    let model = Model::from_container(&c)?;
    let mut opt = OptimizerState::new(&model.params);
    opt.iteration = c.meta.get("iteration").and_then(|v| v.as_u64()).unwrap_or(0);
    if c.array("adam.m.encoder.fc.weight").is_some() {
        opt.m.load_from(&c.arrays, "adam.m.")?;
        opt.v.load_from(&c.arrays, "adam.v.")?;
    }
    let train = c
        .meta
        .get("train")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| Error::Checkpoint(format!("train config: {e}")))?;
    Ok((model, opt, train))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub final_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub losses: Vec<LossRecord>,
    pub skipped: usize,
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("checkpoint-{iteration:06}.skl")
}

/// Runs `train_step` until `cfg.iterations` updates have been applied in total
/// (counting those already in `opt`). Writes `loss.csv` with one row per step
/// run here, periodic checkpoints and `final.skl` into `out_dir`.
///
/// Parameters, statistics and moments are rounded to `f32` whenever a
/// checkpoint is written, so a run resumed from that file continues exactly
/// like the uninterrupted one.
pub fn fit(
    data: &[PreparedSketch],
    model: &mut Model,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&LossRecord),
) -> Result<FitReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    fs::create_dir_all(out_dir).map_err(|source| Error::CheckpointWriteFailure { path: out_dir.display().to_string(), source })?;
    let csv_path = out_dir.join("loss.csv");
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "iteration,lr,loss")?;

    let mut report = FitReport { final_checkpoint: out_dir.join("final.skl"), checkpoints: Vec::new(), losses: Vec::new(), skipped: 0 };
    while opt.iteration < cfg.iterations {
        let iter = opt.iteration;
        let mut rng = iteration_rng(cfg.seed, iter);
        let idx = batch_indices(&mut rng, data.len(), cfg.batch_size);
        let batch: Vec<&PreparedSketch> = idx.iter().map(|&i| &data[i]).collect();
        let step = train_step(model, opt, &batch, cfg, &mut rng)?;
        report.skipped += step.skipped;
        let record = LossRecord { iteration: iter + 1, lr: step.lr, loss: step.loss };
        writeln!(csv, "{},{:e},{:.17e}", record.iteration, record.lr, record.loss)?;
        progress(&record);
        report.losses.push(record);
        if cfg.checkpoint_every > 0 && opt.iteration.is_multiple_of(cfg.checkpoint_every) && opt.iteration < cfg.iterations {
            let path = out_dir.join(checkpoint_name(opt.iteration));
            model.quantize_f32();
            opt.quantize_f32();
            save_training_checkpoint(&path, model, opt, cfg)?;
            report.checkpoints.push(path);
        }
    }
    csv.flush()?;
    model.quantize_f32();
    opt.quantize_f32();
    save_training_checkpoint(&report.final_checkpoint, model, opt, cfg)?;
    Ok(report)
}

/// Mean of the trailing `window` losses ending at (1-based) `iteration`.
pub fn smoothed_loss(losses: &[LossRecord], iteration: u64, window: usize) -> Option<f64> {
    let end = losses.iter().position(|r| r.iteration == iteration)? + 1;
    let start = end.checked_sub(window)?;
    Some(losses[start..end].iter().map(|r| r.loss).sum::<f64>() / window as f64)
}

#[cfg(test)]
mod tests;
