//! The assembled encoder–latent–decoder model and its batch objective.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decoder::{self, DecoderConfig, DecoderParams};
use crate::encoder::{self, dropout_mask, BatchNormStats, EncoderConfig, EncoderParams, NormMode};
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, GraphConfig, SketchGraph};
use crate::lattice::{mask_lattice, sample_lattice, LatticeConfig, SketchLattice};
use crate::params::{Container, ParameterStore};
use crate::sketch_data::{rasterize, stroke5_row, RasterSketch, VectorSketch, CANVAS_SIDE, STROKE5_PAD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub side: usize,
    /// Default lattice grid; inference may override it.
    pub lattice_n: usize,
    pub graph: GraphConfig,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    /// Vector offsets are divided by this before entering the decoder.
    pub offset_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            side: CANVAS_SIDE,
            lattice_n: 32,
            graph: GraphConfig::default(),
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            offset_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        LatticeConfig::new(self.lattice_n, self.side)?;
        self.graph.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.graph.embed_mode != self.encoder.embed_mode {
            return Err(Error::Config("graph and encoder embed modes differ".into()));
        }
        if self.encoder.vocab_side != self.side {
            return Err(Error::Config("encoder vocabulary side must equal the canvas side".into()));
        }
        if !(self.offset_scale > 0.0 && self.offset_scale.is_finite()) {
            return Err(Error::Config("offset_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn lattice(&self, n: Option<usize>) -> Result<LatticeConfig> {
        LatticeConfig::new(n.unwrap_or(self.lattice_n), self.side)
    }
}

/// A sketch ready for training: its full lattice and the scaled stroke-5 rows
/// (unpadded, ending with the end row).
#[derive(Clone, Debug)]
pub struct PreparedSketch {
    pub lattice: SketchLattice,
    pub target: Vec<[f64; 5]>,
    pub label: usize,
}

impl PreparedSketch {
    pub fn from_vector(sketch: &VectorSketch, label: usize, cfg: &ModelConfig) -> Result<Self> {
        let raster = rasterize(sketch, cfg.side);
        Self::from_raster(&raster, sketch, label, cfg)
    }

    pub fn from_raster(raster: &RasterSketch, sketch: &VectorSketch, label: usize, cfg: &ModelConfig) -> Result<Self> {
        if sketch.len() > cfg.decoder.n_max {
            return Err(Error::SequenceTooLong { len: sketch.len(), n_max: cfg.decoder.n_max });
        }
        let lattice = sample_lattice(&raster.canonicalize(cfg.side), &cfg.lattice(None)?)?;
        let scaled = sketch.scaled(1.0 / cfg.offset_scale);
        let target = scaled.steps.iter().map(stroke5_row).collect();
        Ok(PreparedSketch { lattice, target, label })
    }
}

/// Graph plus decoder target for one batch item.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub graph: SketchGraph,
    pub target: Vec<[f64; 5]>,
}

/// Random draws consumed by one batch objective evaluation.
#[derive(Clone, Debug)]
pub struct BatchNoise {
    pub dropout: Option<Vec<Vec<Array2<f64>>>>,
    pub eps: Array2<f64>,
}

impl BatchNoise {
    pub fn sample<R: Rng + ?Sized>(items: &[TrainItem], cfg: &ModelConfig, dropout: bool, rng: &mut R) -> Self {
        let d = cfg.encoder.d;
        let dropout = (dropout && cfg.encoder.dropout > 0.0).then(|| {
            items
                .iter()
                .map(|it| {
                    (0..cfg.encoder.layers)
                        .map(|_| dropout_mask((it.graph.len(), d), cfg.encoder.dropout, rng))
                        .collect()
                })
                .collect()
        });
        let eps = Array2::from_shape_simple_fn((items.len(), d), || StandardNormal.sample(rng));
        BatchNoise { dropout, eps }
    }

    pub fn zero(items: &[TrainItem], cfg: &ModelConfig) -> Self {
        BatchNoise { dropout: None, eps: Array2::zeros((items.len(), cfg.encoder.d)) }
    }
}

#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub loss: f64,
    /// Batch mean and unbiased variance of the pre-norm encoder output.
    pub batch_stats: Option<(Array1<f64>, Array1<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterStore,
    pub bn_stats: BatchNormStats,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = EncoderParams::init(&config.encoder, rng);
        let decoder = DecoderParams::init(&config.decoder, config.encoder.d, rng);
        let bn_stats = BatchNormStats::new(config.encoder.d);
        Ok(Model { config, params: ParameterStore { encoder, decoder }, bn_stats })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoder = EncoderParams::zeros(&config.encoder);
        let decoder = DecoderParams::zeros(&config.decoder, config.encoder.d);
        let bn_stats = BatchNormStats::new(config.encoder.d);
        Ok(Model { config, params: ParameterStore { encoder, decoder }, bn_stats })
    }

    pub fn graph(&self, lattice: &SketchLattice) -> Result<SketchGraph> {
        build_adjacency(lattice, &self.config.graph)
    }

    /// Lattice of `raster` on grid `n` (or the configured default).
    pub fn full_lattice(&self, raster: &RasterSketch, n: Option<usize>) -> Result<SketchLattice> {
        sample_lattice(&raster.canonicalize(self.config.side), &self.config.lattice(n)?)
    }

    /// Full lattice followed by masking with probability `p_mask`.
    pub fn lattice_of<R: Rng + ?Sized>(
        &self,
        raster: &RasterSketch,
        n: Option<usize>,
        p_mask: f64,
        rng: &mut R,
    ) -> Result<SketchLattice> {
        let full = self.full_lattice(raster, n)?;
        Ok(if p_mask > 0.0 { mask_lattice(&full, p_mask, rng) } else { full })
    }

    /// Eval-mode `Ψ` (running batch-norm statistics, no dropout).
    pub fn embed_graph(&self, graph: &SketchGraph) -> Result<Array1<f64>> {
        let tape = encoder::forward_batch(
            &[graph],
            &self.params.encoder,
            &self.config.encoder,
            NormMode::Running(&self.bn_stats),
            None,
        )?;
        Ok(tape.psi.row(0).to_owned())
    }

    pub fn embed_raster(&self, raster: &RasterSketch, n: Option<usize>) -> Result<Array1<f64>> {
        let lattice = self.full_lattice(raster, n)?;
        if lattice.is_empty() {
            return Err(Error::EmptyLattice);
        }
        self.embed_graph(&self.graph(&lattice)?)
    }

    /// Decodes `z` into a sketch with offsets in the original units.
    pub fn generate<R: Rng + ?Sized>(&self, z: ndarray::ArrayView1<f64>, rng: &mut R) -> Result<VectorSketch> {
        let sketch = decoder::generate(z, &self.params.decoder, &self.config.decoder, rng)?;
        Ok(sketch.scaled(self.config.offset_scale))
    }

    /// Mean teacher-forced NLL over the batch, each item normalized by `n_max`.
    /// With `grad`, also accumulates `dLoss/dθ`. Batch norm uses batch
    /// statistics when `batch_norm` is set, running statistics otherwise.
    pub fn batch_objective(
        &self,
        items: &[TrainItem],
        noise: &BatchNoise,
        batch_norm: bool,
        grad: Option<&mut ParameterStore>,
    ) -> Result<BatchLoss> {
        if items.is_empty() {
            return Err(Error::AllItemsSkipped(0));
        }
        let cfg = &self.config;
        let enc = &self.params.encoder;
        let graphs: Vec<&SketchGraph> = items.iter().map(|it| &it.graph).collect();
        let norm = if batch_norm { NormMode::Batch } else { NormMode::Running(&self.bn_stats) };
        let tape = encoder::forward_batch(&graphs, enc, &cfg.encoder, norm, noise.dropout.clone())?;
        let psi = &tape.psi;

        let mu = enc.mu.forward(psi.view());
        let sigma = enc.sigma.forward(psi.view()).mapv_into(|v| (v / 2.0).exp());
        let z = &mu + &(&sigma * &noise.eps);

        let t_len = items.iter().map(|it| it.target.len()).max().unwrap_or(0).min(cfg.decoder.n_max);
        let padded: Vec<Vec<[f64; 5]>> = items
            .iter()
            .map(|it| {
                let mut rows: Vec<[f64; 5]> = it.target.iter().take(t_len).copied().collect();
                rows.resize(t_len, STROKE5_PAD);
                rows
            })
            .collect();
        let refs: Vec<&[[f64; 5]]> = padded.iter().map(|r| r.as_slice()).collect();
        let scale = 1.0 / (cfg.decoder.n_max as f64 * items.len() as f64);

        let Some(grad) = grad else {
            let tf = decoder::teacher_forced(&self.params.decoder, &cfg.decoder, &z, &refs, scale, None)?;
            return Ok(BatchLoss { loss: tf.loss, batch_stats: tape.batch_stats });
        };
        let tf = decoder::teacher_forced(&self.params.decoder, &cfg.decoder, &z, &refs, scale, Some(&mut grad.decoder))?;
        let d_mu = &tf.d_z;
        let d_logvar = &tf.d_z * &noise.eps * &sigma * 0.5;
        let mut d_psi = enc.mu.backward(psi.view(), d_mu.view(), &mut grad.encoder.mu);
        d_psi += &enc.sigma.backward(psi.view(), d_logvar.view(), &mut grad.encoder.sigma);
        encoder::backward_batch(&tape, enc, &cfg.encoder, &d_psi, &mut grad.encoder);
        Ok(BatchLoss { loss: tf.loss, batch_stats: tape.batch_stats })
    }

    /// Folds batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, mean: &Array1<f64>, var: &Array1<f64>) {
        let m = self.config.encoder.bn_momentum;
        self.bn_stats.mean.zip_mut_with(mean, |r, &b| *r = m * *r + (1.0 - m) * b);
        self.bn_stats.var.zip_mut_with(var, |r, &b| *r = m * *r + (1.0 - m) * b);
    }

    pub fn quantize_f32(&mut self) {
        self.params.quantize_f32();
        self.bn_stats.mean.mapv_inplace(|v| v as f32 as f64);
        self.bn_stats.var.mapv_inplace(|v| v as f32 as f64);
    }

    /// Adds parameters, running statistics and configuration to `container`.
    pub fn store_into(&self, container: &mut Container) {
        container.insert_store(&self.params, "");
        let d = self.config.encoder.d;
        container.insert("encoder.bn.running_mean".into(), self.bn_stats.mean.iter(), vec![d]);
        container.insert("encoder.bn.running_var".into(), self.bn_stats.var.iter(), vec![d]);
    }

    pub fn from_container(container: &Container) -> Result<Model> {
        let config: ModelConfig = serde_json::from_value(
            container.meta.get("model").cloned().ok_or_else(|| Error::Checkpoint("header has no model config".into()))?,
        )
        .map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
        let mut model = Model::zeros(config)?;
        model.params.load_from(&container.arrays, "")?;
        let d = model.config.encoder.d;
        for (name, dst) in [
            ("encoder.bn.running_mean", &mut model.bn_stats.mean),
            ("encoder.bn.running_var", &mut model.bn_stats.var),
        ] {
            let (shape, data) = container.array(name).ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
            if shape != &vec![d] {
                return Err(Error::Checkpoint(format!("{name} has shape {shape:?}")));
            }
            *dst = data.iter().map(|&v| v as f64).collect();
        }
        Ok(model)
    }

    pub fn checkpoint_meta(&self, iteration: u64) -> serde_json::Value {
        serde_json::json!({
            "format": "sketchlattice-checkpoint",
            "version": 1,
            "iteration": iteration,
            "model": self.config,
        })
    }

    /// Writes a model-only checkpoint.
    pub fn save(&self, path: &Path, iteration: u64) -> Result<()> {
        let mut c = Container::new(self.checkpoint_meta(iteration));
        self.store_into(&mut c);
        c.write(path)
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_container(&Container::read(path)?)
    }
}
