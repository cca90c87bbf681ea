//! Graph encoder: coordinate-token embedding, `K` propagation layers with a
//! two-unit ReLU MLP branch and residual connection, pooling, then
//! FC → batch norm → tanh. Also the latent bridge `Ψ → (μ, σ, z)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EmbedMode, SketchGraph, Token};
use crate::nn::{gaussian, Affine};
use crate::sketch_data::CANVAS_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Embedding and feature width.
    pub d: usize,
    /// Number of graph encoding layers.
    pub layers: usize,
    pub dropout: f64,
    pub pooling: Pooling,
    pub embed_mode: EmbedMode,
    /// Canvas side; the embedding vocabulary is `side` (factorized) or `side²` (joint).
    pub vocab_side: usize,
    pub residual: bool,
    /// Affine maps per MLP unit; each layer has two units.
    pub mlp_depth: usize,
    /// Row-normalize the adjacency before propagation.
    pub normalize_adjacency: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d: 128,
            layers: 2,
            dropout: 0.1,
            pooling: Pooling::Mean,
            embed_mode: EmbedMode::Factorized,
            vocab_side: CANVAS_SIDE,
            residual: true,
            mlp_depth: 1,
            normalize_adjacency: false,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.mlp_depth == 0 || self.vocab_side == 0 {
            return Err(Error::Config("encoder d, layers, mlp_depth and vocab_side must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            return Err(Error::Config("batch-norm momentum must lie in [0, 1] and eps be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Embedding {
    Joint(Array2<f64>),
    Factorized { x: Array2<f64>, y: Array2<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    /// `2 * mlp_depth` affine maps, each followed by ReLU.
    pub mlp: Vec<Affine>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub embedding: Embedding,
    pub layers: Vec<EncoderLayer>,
    pub fc: Affine,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub mu: Affine,
    pub sigma: Affine,
}

/// Batch-norm running statistics (not trained by the optimizer).
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl BatchNormStats {
    pub fn new(d: usize) -> Self {
        BatchNormStats { mean: Array1::zeros(d), var: Array1::ones(d) }
    }
}

impl EncoderParams {
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let d = cfg.d;
        let embedding = match cfg.embed_mode {
            EmbedMode::Joint => Embedding::Joint(Array2::zeros((cfg.vocab_side * cfg.vocab_side, d))),
            EmbedMode::Factorized => Embedding::Factorized {
                x: Array2::zeros((cfg.vocab_side, d)),
                y: Array2::zeros((cfg.vocab_side, d)),
            },
        };
        EncoderParams {
            embedding,
            layers: (0..cfg.layers)
                .map(|_| EncoderLayer { mlp: (0..2 * cfg.mlp_depth).map(|_| Affine::zeros(d, d)).collect() })
                .collect(),
            fc: Affine::zeros(d, d),
            bn_gamma: Array1::zeros(d),
            bn_beta: Array1::zeros(d),
            mu: Affine::zeros(d, d),
            sigma: Affine::zeros(d, d),
        }
    }

    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let d = cfg.d;
        let embedding = match cfg.embed_mode {
            EmbedMode::Joint => Embedding::Joint(gaussian((cfg.vocab_side * cfg.vocab_side, d), 1.0, rng)),
            EmbedMode::Factorized => Embedding::Factorized {
                x: gaussian((cfg.vocab_side, d), 1.0, rng),
                y: gaussian((cfg.vocab_side, d), 1.0, rng),
            },
        };
        let layers = (0..cfg.layers)
            .map(|_| EncoderLayer { mlp: (0..2 * cfg.mlp_depth).map(|_| Affine::random(d, d, 2.0, rng)).collect() })
            .collect();
        EncoderParams {
            embedding,
            layers,
            fc: Affine::random(d, d, 1.0, rng),
            bn_gamma: Array1::ones(d),
            bn_beta: Array1::zeros(d),
            mu: Affine::random(d, d, 1.0, rng),
            sigma: Affine::random(d, d, 0.1, rng),
        }
    }

    pub fn d(&self) -> usize {
        self.fc.outputs()
    }
}

/// Node features `v_i = F_emb(p_i)`: a row lookup (joint) or the sum of the
/// x-table and y-table rows (factorized).
pub fn embed_nodes(tokens: &[Token], params: &EncoderParams) -> Result<Array2<f64>> {
    let d = params.d();
    let mut out = Array2::zeros((tokens.len(), d));
    for (i, token) in tokens.iter().enumerate() {
        match (token, &params.embedding) {
            (&Token::Joint(t), Embedding::Joint(table)) => {
                check_vocab(t, table.nrows())?;
                out.row_mut(i).assign(&table.row(t));
            }
            (&Token::Factorized { x, y }, Embedding::Factorized { x: tx, y: ty }) => {
                check_vocab(x, tx.nrows())?;
                check_vocab(y, ty.nrows())?;
                let mut row = out.row_mut(i);
                row.assign(&tx.row(x));
                row += &ty.row(y);
            }
            _ => {
                return Err(Error::ShapeMismatch(
                    "token kind does not match the embedding mode".into(),
                ))
            }
        }
    }
    Ok(out)
}

fn check_vocab(token: usize, vocab: usize) -> Result<()> {
    if token >= vocab {
        return Err(Error::TokenOutOfVocabulary { token, vocab });
    }
    Ok(())
}

/// `V̂ = A V`, unnormalized.
pub fn propagate(v: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() || a.ncols() != v.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "adjacency {:?} cannot propagate features {:?}",
            a.dim(),
            v.dim()
        )));
    }
    Ok(a.dot(&v))
}

fn row_normalized(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    out
}

/// Inverted-dropout mask: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

struct LayerTape {
    propagated: Array2<f64>,
    /// Post-ReLU output of every affine map in the branch.
    acts: Vec<Array2<f64>>,
    mask: Option<Array2<f64>>,
}

fn layer_forward(
    v: Array2<f64>,
    a: &Array2<f64>,
    layer: &EncoderLayer,
    residual: bool,
    mask: Option<Array2<f64>>,
) -> (Array2<f64>, LayerTape) {
    let propagated = a.dot(&v);
    let mut acts = Vec::with_capacity(layer.mlp.len());
    let mut x = propagated.clone();
    for unit in &layer.mlp {
        x = unit.forward(x.view()).mapv_into(crate::nn::relu);
        acts.push(x.clone());
    }
    if let Some(m) = &mask {
        x *= m;
    }
    let out = if residual { x + &v } else { x };
    (out, LayerTape { propagated, acts, mask })
}

fn layer_backward(
    tape: &LayerTape,
    a: &Array2<f64>,
    layer: &EncoderLayer,
    residual: bool,
    d_out: &Array2<f64>,
    grad: &mut EncoderLayer,
) -> Array2<f64> {
    let mut d = d_out.clone();
    if let Some(m) = &tape.mask {
        d *= m;
    }
    for k in (0..layer.mlp.len()).rev() {
        // ReLU derivative from the stored post-activation
        d.zip_mut_with(&tape.acts[k], |g, &y| {
            if y <= 0.0 {
                *g = 0.0
            }
        });
        let x = if k == 0 { tape.propagated.view() } else { tape.acts[k - 1].view() };
        d = layer.mlp[k].backward(x, d.view(), &mut grad.mlp[k]);
    }
    let mut d_in = a.t().dot(&d);
    if residual {
        d_in += d_out;
    }
    d_in
}

/// Smallest `|pre-activation|` over every MLP ReLU when encoding `graphs`
/// without dropout; finite-difference checks need it well above the step.
pub(crate) fn min_relu_margin(graphs: &[&SketchGraph], params: &EncoderParams, cfg: &EncoderConfig) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for g in graphs {
        let a = if cfg.normalize_adjacency { row_normalized(&g.adjacency) } else { g.adjacency.clone() };
        let mut v = embed_nodes(&g.tokens, params)?;
        for layer in &params.layers {
            let mut x = a.dot(&v);
            for unit in &layer.mlp {
                let pre = unit.forward(x.view());
                margin = pre.iter().fold(margin, |m, p| m.min(p.abs()));
                x = pre.mapv_into(crate::nn::relu);
            }
            v = if cfg.residual { x + &v } else { x };
        }
    }
    Ok(margin)
}

/// One encoding layer: `V + Dropout(ReLU(W2 ReLU(W1 (A V) + b1) + b2))`.
/// Dropout is only sampled in `train_mode`.
pub fn encode_layer<R: Rng + ?Sized>(
    v: ArrayView2<f64>,
    a: ArrayView2<f64>,
    layer: &EncoderLayer,
    cfg: &EncoderConfig,
    train_mode: bool,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() || a.ncols() != v.nrows() {
        return Err(Error::ShapeMismatch(format!("adjacency {:?} vs features {:?}", a.dim(), v.dim())));
    }
    if layer.mlp.first().map(|u| u.inputs()) != Some(v.ncols()) {
        return Err(Error::ShapeMismatch(format!("layer width does not match features {:?}", v.dim())));
    }
    let mask = (train_mode && cfg.dropout > 0.0).then(|| dropout_mask(v.dim(), cfg.dropout, rng));
    let (out, _) = layer_forward(v.to_owned(), &a.to_owned(), layer, cfg.residual, mask);
    Ok(out)
}

/// How batch norm is evaluated.
#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a> {
    /// Normalize with the batch's own statistics.
    Batch,
    /// Normalize with stored running statistics.
    Running(&'a BatchNormStats),
}

struct GraphTape {
    adjacency: Array2<f64>,
    tokens: Vec<Token>,
    layers: Vec<LayerTape>,
    m: usize,
}

/// Everything the backward pass needs from a batch forward pass.
pub(crate) struct EncoderTape {
    graphs: Vec<GraphTape>,
    pooled: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_norm: bool,
    pub psi: Array2<f64>,
    /// Batch mean and unbiased variance, when batch statistics were used.
    pub batch_stats: Option<(Array1<f64>, Array1<f64>)>,
}

/// Encodes a batch of graphs into `Ψ` rows. `dropout_masks[b][k]`, when
/// given, is the mask for graph `b` at layer `k`.
pub(crate) fn forward_batch(
    graphs: &[&SketchGraph],
    params: &EncoderParams,
    cfg: &EncoderConfig,
    norm: NormMode<'_>,
    dropout_masks: Option<Vec<Vec<Array2<f64>>>>,
) -> Result<EncoderTape> {
    let d = params.d();
    let b = graphs.len();
    let mut pooled = Array2::zeros((b, d));
    let mut tapes = Vec::with_capacity(b);
    let mut masks = dropout_masks.map(|m| m.into_iter());
    for (i, g) in graphs.iter().enumerate() {
        let m = g.len();
        if m == 0 {
            return Err(Error::EmptyLattice);
        }
        if g.adjacency.dim() != (m, m) {
            return Err(Error::ShapeMismatch(format!("adjacency {:?} for {m} nodes", g.adjacency.dim())));
        }
        let adjacency = if cfg.normalize_adjacency { row_normalized(&g.adjacency) } else { g.adjacency.clone() };
        let mut item_masks = masks.as_mut().and_then(|it| it.next()).map(|v| v.into_iter());
        let mut v = embed_nodes(&g.tokens, params)?;
        let mut layers = Vec::with_capacity(params.layers.len());
        for layer in &params.layers {
            let mask = item_masks.as_mut().and_then(|it| it.next());
            let (out, tape) = layer_forward(v, &adjacency, layer, cfg.residual, mask);
            layers.push(tape);
            v = out;
        }
        let mut row = pooled.row_mut(i);
        row.assign(&v.sum_axis(Axis(0)));
        if cfg.pooling == Pooling::Mean {
            row /= m as f64;
        }
        tapes.push(GraphTape { adjacency, tokens: g.tokens.clone(), layers, m });
    }

    let y = params.fc.forward(pooled.view());
    let (mean, var, batch_norm) = match norm {
        NormMode::Batch => {
            let mean = y.mean_axis(Axis(0)).expect("non-empty batch");
            let var = (&y - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
            (mean, var, true)
        }
        NormMode::Running(stats) => (stats.mean.clone(), stats.var.clone(), false),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + cfg.bn_eps).sqrt());
    let xhat = (&y - &mean) * &inv_std;
    let psi = (&xhat * &params.bn_gamma + &params.bn_beta).mapv_into(bounded_tanh);
    let batch_stats = batch_norm.then(|| {
        let unbiased = if b > 1 { &var * (b as f64 / (b - 1) as f64) } else { var.clone() };
        (mean, unbiased)
    });
    Ok(EncoderTape { graphs: tapes, pooled, xhat, inv_std, batch_norm, psi, batch_stats })
}

/// `tanh` kept strictly inside `(-1, 1)` where it would round to `±1`.
fn bounded_tanh(x: f64) -> f64 {
    x.tanh().clamp(-PSI_BOUND, PSI_BOUND)
}

const PSI_BOUND: f64 = 1.0 - f64::EPSILON / 2.0;

/// Accumulates encoder gradients for `dL/dΨ` (excluding the latent bridge).
pub(crate) fn backward_batch(
    tape: &EncoderTape,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    d_psi: &Array2<f64>,
    grad: &mut EncoderParams,
) {
    let b = tape.psi.nrows() as f64;
    let d_bn_out = d_psi * &tape.psi.mapv(|p| 1.0 - p * p);
    grad.bn_gamma += &(&d_bn_out * &tape.xhat).sum_axis(Axis(0));
    grad.bn_beta += &d_bn_out.sum_axis(Axis(0));
    let d_xhat = &d_bn_out * &params.bn_gamma;
    let d_y = if tape.batch_norm {
        let sum_dx = d_xhat.sum_axis(Axis(0));
        let sum_dx_xhat = (&d_xhat * &tape.xhat).sum_axis(Axis(0));
        ((&d_xhat * b) - &sum_dx - &(&tape.xhat * &sum_dx_xhat)) * &(&tape.inv_std / b)
    } else {
        &d_xhat * &tape.inv_std
    };
    let d_pooled = params.fc.backward(tape.pooled.view(), d_y.view(), &mut grad.fc);

    for (i, g) in tape.graphs.iter().enumerate() {
        let scale = if cfg.pooling == Pooling::Mean { 1.0 / g.m as f64 } else { 1.0 };
        let row = d_pooled.row(i).mapv(|v| v * scale);
        let mut d_v = Array2::from_shape_fn((g.m, row.len()), |(_, j)| row[j]);
        for (k, layer_tape) in g.layers.iter().enumerate().rev() {
            d_v = layer_backward(
                layer_tape,
                &g.adjacency,
                &params.layers[k],
                cfg.residual,
                &d_v,
                &mut grad.layers[k],
            );
        }
        scatter_embedding(&g.tokens, &d_v, &mut grad.embedding);
    }
}

fn scatter_embedding(tokens: &[Token], d_v: &Array2<f64>, grad: &mut Embedding) {
    for (i, token) in tokens.iter().enumerate() {
        let row = d_v.row(i);
        match (token, &mut *grad) {
            (&Token::Joint(t), Embedding::Joint(table)) => {
                let mut r = table.row_mut(t);
                r += &row;
            }
            (&Token::Factorized { x, y }, Embedding::Factorized { x: tx, y: ty }) => {
                let mut r = tx.row_mut(x);
                r += &row;
                let mut r = ty.row_mut(y);
                r += &row;
            }
            _ => unreachable!("token kinds were checked during the forward pass"),
        }
    }
}

/// Eval-style single-graph encoding: batch norm uses `stats`; dropout is
/// sampled from `rng` only when `train_mode` is set.
pub fn encode<R: Rng + ?Sized>(
    graph: &SketchGraph,
    params: &EncoderParams,
    stats: &BatchNormStats,
    cfg: &EncoderConfig,
    train_mode: bool,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let masks = (train_mode && cfg.dropout > 0.0).then(|| {
        vec![(0..params.layers.len())
            .map(|_| dropout_mask((graph.len(), params.d()), cfg.dropout, rng))
            .collect()]
    });
    let tape = forward_batch(&[graph], params, cfg, NormMode::Running(stats), masks)?;
    Ok(tape.psi.row(0).to_owned())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub psi: Array1<f64>,
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    pub z: Array1<f64>,
}

/// `z = μ + σ ⊙ ε` with `μ = W_μ Ψ + b_μ`, `σ = exp((W_σ Ψ + b_σ) / 2)` and
/// `ε ~ N(0, I)` drawn from `rng`.
pub fn reparameterize<R: Rng + ?Sized>(psi: ArrayView1<f64>, params: &EncoderParams, rng: &mut R) -> LatentSample {
    let eps = Array1::from_shape_simple_fn(psi.len(), || StandardNormal.sample(rng));
    reparameterize_with_noise(psi, params, eps.view())
}

pub fn reparameterize_with_noise(psi: ArrayView1<f64>, params: &EncoderParams, eps: ArrayView1<f64>) -> LatentSample {
    let row = psi.insert_axis(Axis(0));
    let mu = params.mu.forward(row).row(0).to_owned();
    let sigma = params.sigma.forward(row).row(0).mapv(|v| (v / 2.0).exp());
    let z = &mu + &(&sigma * &eps);
    LatentSample { psi: psi.to_owned(), mu, sigma, z }
}

/// Parameter tally per named array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParameterCount {
    pub entries: Vec<(String, Vec<usize>, usize)>,
    pub total: usize,
}

/// Counts trainable encoder parameters including the latent bridge.
pub fn count_parameters(params: &EncoderParams) -> ParameterCount {
    let mut entries = Vec::new();
    for (name, view) in encoder_tensors(params, "encoder") {
        entries.push((name, view.shape().to_vec(), view.len()));
    }
    let total = entries.iter().map(|e| e.2).sum();
    ParameterCount { entries, total }
}

/// Closed-form count for a configuration, without allocating tables.
pub fn parameter_count_closed_form(cfg: &EncoderConfig) -> usize {
    let d = cfg.d;
    let embed = match cfg.embed_mode {
        EmbedMode::Joint => cfg.vocab_side * cfg.vocab_side * d,
        EmbedMode::Factorized => 2 * cfg.vocab_side * d,
    };
    let affine = d * d + d;
    embed + cfg.layers * 2 * cfg.mlp_depth * affine + affine + 2 * d + 2 * affine
}

pub(crate) fn encoder_tensors<'a>(
    p: &'a EncoderParams,
    prefix: &str,
) -> Vec<(String, ndarray::ArrayViewD<'a, f64>)> {
    let mut out = Vec::new();
    match &p.embedding {
        Embedding::Joint(t) => out.push((format!("{prefix}.embedding.joint"), t.view().into_dyn())),
        Embedding::Factorized { x, y } => {
            out.push((format!("{prefix}.embedding.x"), x.view().into_dyn()));
            out.push((format!("{prefix}.embedding.y"), y.view().into_dyn()));
        }
    }
    for (k, layer) in p.layers.iter().enumerate() {
        for (u, unit) in layer.mlp.iter().enumerate() {
            out.push((format!("{prefix}.layer{k}.mlp{u}.weight"), unit.weight.view().into_dyn()));
            out.push((format!("{prefix}.layer{k}.mlp{u}.bias"), unit.bias.view().into_dyn()));
        }
    }
    out.push((format!("{prefix}.fc.weight"), p.fc.weight.view().into_dyn()));
    out.push((format!("{prefix}.fc.bias"), p.fc.bias.view().into_dyn()));
    out.push((format!("{prefix}.bn.gamma"), p.bn_gamma.view().into_dyn()));
    out.push((format!("{prefix}.bn.beta"), p.bn_beta.view().into_dyn()));
    out.push((format!("{prefix}.mu.weight"), p.mu.weight.view().into_dyn()));
    out.push((format!("{prefix}.mu.bias"), p.mu.bias.view().into_dyn()));
    out.push((format!("{prefix}.sigma.weight"), p.sigma.weight.view().into_dyn()));
    out.push((format!("{prefix}.sigma.bias"), p.sigma.bias.view().into_dyn()));
    out
}

pub(crate) fn encoder_tensors_mut<'a>(
    p: &'a mut EncoderParams,
    prefix: &str,
) -> Vec<(String, ndarray::ArrayViewMutD<'a, f64>)> {
    let mut out = Vec::new();
    match &mut p.embedding {
        Embedding::Joint(t) => out.push((format!("{prefix}.embedding.joint"), t.view_mut().into_dyn())),
        Embedding::Factorized { x, y } => {
            out.push((format!("{prefix}.embedding.x"), x.view_mut().into_dyn()));
            out.push((format!("{prefix}.embedding.y"), y.view_mut().into_dyn()));
        }
    }
    for (k, layer) in p.layers.iter_mut().enumerate() {
        for (u, unit) in layer.mlp.iter_mut().enumerate() {
            out.push((format!("{prefix}.layer{k}.mlp{u}.weight"), unit.weight.view_mut().into_dyn()));
            out.push((format!("{prefix}.layer{k}.mlp{u}.bias"), unit.bias.view_mut().into_dyn()));
        }
    }
    out.push((format!("{prefix}.fc.weight"), p.fc.weight.view_mut().into_dyn()));
    out.push((format!("{prefix}.fc.bias"), p.fc.bias.view_mut().into_dyn()));
    out.push((format!("{prefix}.bn.gamma"), p.bn_gamma.view_mut().into_dyn()));
    out.push((format!("{prefix}.bn.beta"), p.bn_beta.view_mut().into_dyn()));
    out.push((format!("{prefix}.mu.weight"), p.mu.weight.view_mut().into_dyn()));
    out.push((format!("{prefix}.mu.bias"), p.mu.bias.view_mut().into_dyn()));
    out.push((format!("{prefix}.sigma.weight"), p.sigma.weight.view_mut().into_dyn()));
    out.push((format!("{prefix}.sigma.bias"), p.sigma.bias.view_mut().into_dyn()));
    out
}

/// Slice helper used by tests: the pooled vector for graph `i` before the FC layer.
#[cfg(test)]
pub(crate) fn pooled_features(graph: &SketchGraph, params: &EncoderParams, cfg: &EncoderConfig) -> Result<Array1<f64>> {
    let stats = BatchNormStats::new(params.d());
    let tape = forward_batch(&[graph], params, cfg, NormMode::Running(&stats), None)?;
    Ok(tape.pooled.slice(ndarray::s![0, ..]).to_owned())
}
