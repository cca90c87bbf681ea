//! Mixture-density LSTM decoder conditioned on the latent `z`.
//!
//! At every step the LSTM consumes `[s_{t-1}, z]`; a linear head maps the
//! hidden state to `6M + 3` values laid out as
//! `[π logits | μx | μy | ln σx | ln σy | ρ pre-tanh | pen logits]`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, sample_categorical, sigmoid, softmax, Affine};
use crate::sketch_data::{Pen, Step, VectorSketch, STROKE5_START};

/// Floor on `1 - ρ²` inside the bivariate density.
const MIN_ONE_MINUS_RHO2: f64 = 1e-12;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub hidden: usize,
    /// Number of bivariate Gaussian components.
    pub mixtures: usize,
    pub n_max: usize,
    /// Sampling temperature used by generation.
    pub temperature: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { hidden: 512, mixtures: 20, n_max: 200, temperature: 0.4 }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.mixtures == 0 || self.n_max == 0 {
            return Err(Error::Config("decoder hidden, mixtures and n_max must be positive".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        6 * self.mixtures + 3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// `z → [h0; c0]` before tanh.
    pub init: Affine,
    /// Gate pre-activations from `[s_{t-1}, z, h_{t-1}]`, gate order `i, f, g, o`.
    pub lstm: Affine,
    pub head: Affine,
}

impl DecoderParams {
    pub fn zeros(cfg: &DecoderConfig, latent: usize) -> Self {
        let h = cfg.hidden;
        DecoderParams {
            init: Affine::zeros(latent, 2 * h),
            lstm: Affine::zeros(5 + latent + h, 4 * h),
            head: Affine::zeros(h, cfg.head_width()),
        }
    }

    pub fn init<R: Rng + ?Sized>(cfg: &DecoderConfig, latent: usize, rng: &mut R) -> Self {
        let h = cfg.hidden;
        let mut lstm = Affine::random(5 + latent + h, 4 * h, 1.0, rng);
        lstm.bias.slice_mut(s![h..2 * h]).fill(1.0);
        DecoderParams {
            init: Affine::random(latent, 2 * h, 1.0, rng),
            lstm,
            head: Affine::random(h, cfg.head_width(), 1.0, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.head.inputs()
    }

    pub fn latent(&self) -> usize {
        self.init.inputs()
    }

    fn check(&self, cfg: &DecoderConfig, latent: usize) -> Result<()> {
        let h = cfg.hidden;
        if self.init.weight.dim() != (latent, 2 * h)
            || self.lstm.weight.dim() != (5 + latent + h, 4 * h)
            || self.head.weight.dim() != (h, cfg.head_width())
        {
            return Err(Error::ShapeMismatch(format!(
                "decoder parameters do not match hidden = {h}, mixtures = {}, latent = {latent}",
                cfg.mixtures
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

/// `[h0; c0] = tanh(W_z z + b_z)`.
pub fn init_state(z: ArrayView1<f64>, params: &DecoderParams) -> LstmState {
    let h = params.hidden();
    let out = params.init.forward(z.insert_axis(Axis(0))).mapv_into(f64::tanh);
    LstmState { h: out.slice(s![0, ..h]).to_owned(), c: out.slice(s![0, h..]).to_owned() }
}

/// Gate activations for a batch. Returns `(gates, c, tanh c, h)` where
/// `gates` holds the activated `i, f, g, o` blocks side by side.
fn lstm_cell(pre: Array2<f64>, c_prev: ArrayView2<f64>, h: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut gates = pre;
    gates.slice_mut(s![.., ..2 * h]).mapv_inplace(sigmoid);
    gates.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
    gates.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
    let i = gates.slice(s![.., ..h]);
    let f = gates.slice(s![.., h..2 * h]);
    let g = gates.slice(s![.., 2 * h..3 * h]);
    let o = gates.slice(s![.., 3 * h..]);
    let c = &f * &c_prev + &i * &g;
    let tc = c.mapv(f64::tanh);
    let h_new = &o * &tc;
    (gates, c, tc, h_new)
}

/// Per-step mixture and pen distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub pi_logits: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub rho: Vec<f64>,
    pub pen_logits: [f64; 3],
    pub pen: [f64; 3],
}

impl MixtureParams {
    /// Softmax for weights and pen, `exp` for deviations, `tanh` for correlations.
    pub fn from_raw(raw: &[f64], mixtures: usize) -> Self {
        let m = mixtures;
        assert_eq!(raw.len(), 6 * m + 3, "raw head output has the wrong width");
        let pi_logits = raw[..m].to_vec();
        let pen_logits = [raw[6 * m], raw[6 * m + 1], raw[6 * m + 2]];
        let pen = softmax(&pen_logits, 1.0);
        MixtureParams {
            pi: softmax(&pi_logits, 1.0),
            pi_logits,
            mu_x: raw[m..2 * m].to_vec(),
            mu_y: raw[2 * m..3 * m].to_vec(),
            sigma_x: raw[3 * m..4 * m].iter().map(|v| v.exp()).collect(),
            sigma_y: raw[4 * m..5 * m].iter().map(|v| v.exp()).collect(),
            rho: raw[5 * m..6 * m].iter().map(|v| v.tanh()).collect(),
            pen_logits,
            pen: [pen[0], pen[1], pen[2]],
        }
    }

    pub fn mixtures(&self) -> usize {
        self.pi.len()
    }

    /// Sampling-mode adjustment: logits divided by `tau`, deviations scaled by `sqrt(tau)`.
    pub fn tempered(&self, tau: f64) -> MixtureParams {
        let pi_logits: Vec<f64> = self.pi_logits.iter().map(|l| l / tau).collect();
        let pen_logits = self.pen_logits.map(|l| l / tau);
        let pen = softmax(&pen_logits, 1.0);
        let root = tau.sqrt();
        MixtureParams {
            pi: softmax(&pi_logits, 1.0),
            pi_logits,
            mu_x: self.mu_x.clone(),
            mu_y: self.mu_y.clone(),
            sigma_x: self.sigma_x.iter().map(|s| s * root).collect(),
            sigma_y: self.sigma_y.iter().map(|s| s * root).collect(),
            rho: self.rho.clone(),
            pen_logits,
            pen: [pen[0], pen[1], pen[2]],
        }
    }
}

/// One decoding step from the previous stroke-5 row.
pub fn step(
    prev: &[f64; 5],
    z: ArrayView1<f64>,
    state: &LstmState,
    params: &DecoderParams,
    cfg: &DecoderConfig,
    temperature: Option<f64>,
) -> Result<(MixtureParams, LstmState)> {
    params.check(cfg, z.len())?;
    if state.h.len() != cfg.hidden || state.c.len() != cfg.hidden {
        return Err(Error::ShapeMismatch(format!(
            "LSTM state of width {} / {} for hidden = {}",
            state.h.len(),
            state.c.len(),
            cfg.hidden
        )));
    }
    let x = concatenate![Axis(0), ArrayView1::from(&prev[..]), z, state.h.view()];
    let pre = params.lstm.forward(x.view().insert_axis(Axis(0)));
    let (_, c, _, h) = lstm_cell(pre, state.c.view().insert_axis(Axis(0)), cfg.hidden);
    let raw = params.head.forward(h.view());
    let mp = MixtureParams::from_raw(raw.row(0).as_slice().expect("contiguous"), cfg.mixtures);
    let mp = match temperature {
        Some(tau) => mp.tempered(tau),
        None => mp,
    };
    Ok((mp, LstmState { h: h.row(0).to_owned(), c: c.row(0).to_owned() }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepNll {
    pub offset: f64,
    pub pen: f64,
}

impl StepNll {
    pub fn total(&self) -> f64 {
        self.offset + self.pen
    }
}

struct Bivariate {
    zx: f64,
    zy: f64,
    r: f64,
    q: f64,
    log_density: f64,
}

#[inline]
fn bivariate(dx: f64, dy: f64, mu_x: f64, mu_y: f64, ln_sx: f64, ln_sy: f64, rho: f64) -> Bivariate {
    let zx = (dx - mu_x) * (-ln_sx).exp();
    let zy = (dy - mu_y) * (-ln_sy).exp();
    let r = (1.0 - rho * rho).max(MIN_ONE_MINUS_RHO2);
    let q = zx * zx + zy * zy - 2.0 * rho * zx * zy;
    let log_density = -LN_2PI - ln_sx - ln_sy - 0.5 * r.ln() - q / (2.0 * r);
    Bivariate { zx, zy, r, q, log_density }
}

/// Negative log-likelihood of a stroke-5 target: `-ln Σ_j π_j N(Δ | μ_j, σ_j, ρ_j)`
/// for the offset and the categorical cross-entropy for the pen, both in log space.
pub fn gmm_nll(mp: &MixtureParams, target: &[f64; 5]) -> StepNll {
    let lse_pi = log_sum_exp(&mp.pi_logits);
    let comps: Vec<f64> = (0..mp.mixtures())
        .map(|j| {
            let b = bivariate(
                target[0],
                target[1],
                mp.mu_x[j],
                mp.mu_y[j],
                mp.sigma_x[j].ln(),
                mp.sigma_y[j].ln(),
                mp.rho[j],
            );
            mp.pi_logits[j] - lse_pi + b.log_density
        })
        .collect();
    let lse_pen = log_sum_exp(&mp.pen_logits);
    let pen = -(0..3)
        .filter(|&k| target[2 + k] != 0.0)
        .map(|k| target[2 + k] * (mp.pen_logits[k] - lse_pen))
        .sum::<f64>();
    StepNll { offset: -log_sum_exp(&comps), pen }
}

/// NLL of one raw head row; writes `w_offset * dNLL_offset + w_pen * dNLL_pen`
/// into `d_raw`.
pub(crate) fn raw_nll_and_grad(
    raw: ArrayView1<f64>,
    mixtures: usize,
    target: &[f64; 5],
    w_offset: f64,
    w_pen: f64,
    mut d_raw: ndarray::ArrayViewMut1<f64>,
) -> StepNll {
    let m = mixtures;
    let mut offset = 0.0;
    if w_offset != 0.0 {
        let logits = raw.slice(s![..m]);
        let lse_pi = log_sum_exp(logits.as_slice().expect("contiguous"));
        let mut comps = Vec::with_capacity(m);
        let mut dens = Vec::with_capacity(m);
        for j in 0..m {
            let rho = raw[5 * m + j].tanh();
            let b = bivariate(target[0], target[1], raw[m + j], raw[2 * m + j], raw[3 * m + j], raw[4 * m + j], rho);
            comps.push(logits[j] - lse_pi + b.log_density);
            dens.push((b, rho));
        }
        let lse = log_sum_exp(&comps);
        offset = -lse;
        for j in 0..m {
            let gamma = (comps[j] - lse).exp();
            let pi = (logits[j] - lse_pi).exp();
            let (b, rho) = &dens[j];
            let (zx, zy, r, q) = (b.zx, b.zy, b.r, b.q);
            let sx_inv = (-raw[3 * m + j]).exp();
            let sy_inv = (-raw[4 * m + j]).exp();
            d_raw[j] += w_offset * (pi - gamma);
            d_raw[m + j] -= w_offset * gamma * (zx - rho * zy) * sx_inv / r;
            d_raw[2 * m + j] -= w_offset * gamma * (zy - rho * zx) * sy_inv / r;
            d_raw[3 * m + j] -= w_offset * gamma * (-1.0 + (zx * zx - rho * zx * zy) / r);
            d_raw[4 * m + j] -= w_offset * gamma * (-1.0 + (zy * zy - rho * zx * zy) / r);
            let d_rho = rho / r + zx * zy / r - rho * q / (r * r);
            d_raw[5 * m + j] -= w_offset * gamma * d_rho * (1.0 - rho * rho);
        }
    }
    let pen_logits = [raw[6 * m], raw[6 * m + 1], raw[6 * m + 2]];
    let lse_pen = log_sum_exp(&pen_logits);
    let mut pen = 0.0;
    for k in 0..3 {
        let log_q = pen_logits[k] - lse_pen;
        if target[2 + k] != 0.0 {
            pen -= target[2 + k] * log_q;
        }
        d_raw[6 * m + k] += w_pen * (log_q.exp() - target[2 + k]);
    }
    StepNll { offset, pen }
}

/// Draws a stroke-5 row: component from the tempered weights, offset from that
/// component's bivariate normal with tempered deviations, pen from the
/// tempered categorical.
pub fn sample_stroke<R: Rng + ?Sized>(mp: &MixtureParams, tau: f64, rng: &mut R) -> [f64; 5] {
    let t = mp.tempered(tau);
    let j = sample_categorical(&t.pi, rng);
    let n1: f64 = StandardNormal.sample(rng);
    let n2: f64 = StandardNormal.sample(rng);
    let rho = t.rho[j];
    let dx = t.mu_x[j] + t.sigma_x[j] * n1;
    let dy = t.mu_y[j] + t.sigma_y[j] * (rho * n1 + (1.0 - rho * rho).max(0.0).sqrt() * n2);
    let k = sample_categorical(&t.pen, rng);
    let mut row = [dx, dy, 0.0, 0.0, 0.0];
    row[2 + k] = 1.0;
    row
}

/// Autoregressive rollout from the `(0, 0, down)` start token. Stops at the
/// first sampled end token or after `n_max` steps (the last of which is then
/// forced to end). Offsets are in decoder units. A rollout that never puts the
/// pen down is returned as an empty sketch.
pub fn generate<R: Rng + ?Sized>(
    z: ArrayView1<f64>,
    params: &DecoderParams,
    cfg: &DecoderConfig,
    rng: &mut R,
) -> Result<VectorSketch> {
    params.check(cfg, z.len())?;
    let mut state = init_state(z, params);
    let mut prev = STROKE5_START;
    let mut steps = Vec::new();
    for t in 0..cfg.n_max {
        let (mp, next) = step(&prev, z, &state, params, cfg, None)?;
        state = next;
        let row = sample_stroke(&mp, cfg.temperature, rng);
        if row[4] == 1.0 || t + 1 == cfg.n_max {
            steps.push(Step::new(0.0, 0.0, Pen::End));
            break;
        }
        let pen = if row[3] == 1.0 { Pen::Lift } else { Pen::Down };
        steps.push(Step::new(row[0], row[1], pen));
        prev = row;
    }
    if !steps.iter().any(|s| s.pen == Pen::Down) {
        steps.clear();
    }
    Ok(VectorSketch::new(steps))
}

/// Result of a teacher-forced pass over a batch.
pub(crate) struct TeacherForced {
    /// Sum over the batch of weighted per-item losses.
    pub loss: f64,
    pub d_z: Array2<f64>,
}

/// Teacher-forced loss over a padded batch: the input at step `t` is target
/// row `t - 1` (the start token at `t = 0`). The offset term of a row counts
/// up to and including the first end row; the pen term counts on every row.
/// Each term is multiplied by `scale`. Parameter gradients are accumulated
/// into `grad` when given.
pub(crate) fn teacher_forced(
    params: &DecoderParams,
    cfg: &DecoderConfig,
    z: &Array2<f64>,
    targets: &[&[[f64; 5]]],
    scale: f64,
    grad: Option<&mut DecoderParams>,
) -> Result<TeacherForced> {
    let (b, latent) = z.dim();
    params.check(cfg, latent)?;
    if targets.len() != b {
        return Err(Error::ShapeMismatch(format!("{} targets for {b} latents", targets.len())));
    }
    let t_len = targets.first().map_or(0, |t| t.len());
    if targets.iter().any(|t| t.len() != t_len) || t_len == 0 {
        return Err(Error::ShapeMismatch("targets must share a nonzero padded length".into()));
    }
    let h = cfg.hidden;
    let m = cfg.mixtures;

    let w = &params.lstm.weight;
    let w_s = w.slice(s![..5, ..]);
    let w_z = w.slice(s![5..5 + latent, ..]);
    let w_h = w.slice(s![5 + latent.., ..]);

    let init_out = params.init.forward(z.view()).mapv_into(f64::tanh);
    let z_contrib = z.dot(&w_z) + &params.lstm.bias;

    let inputs: Vec<Array2<f64>> = (0..t_len)
        .map(|t| {
            Array2::from_shape_fn((b, 5), |(i, k)| if t == 0 { STROKE5_START[k] } else { targets[i][t - 1][k] })
        })
        .collect();

    let mut hs = Vec::with_capacity(t_len + 1);
    let mut cs = Vec::with_capacity(t_len + 1);
    hs.push(init_out.slice(s![.., ..h]).to_owned());
    cs.push(init_out.slice(s![.., h..]).to_owned());
    let mut gates = Vec::with_capacity(t_len);
    let mut tanh_c = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let pre = inputs[t].dot(&w_s) + hs[t].dot(&w_h) + &z_contrib;
        let (g, c, tc, h_new) = lstm_cell(pre, cs[t].view(), h);
        gates.push(g);
        cs.push(c);
        tanh_c.push(tc);
        hs.push(h_new);
    }
    let h_views: Vec<ArrayView2<f64>> = hs[1..].iter().map(|x| x.view()).collect();
    let h_all = concatenate(Axis(0), &h_views).expect("equal widths");
    let raw = params.head.forward(h_all.view());

    let ends: Vec<usize> = targets
        .iter()
        .map(|t| t.iter().position(|r| r[4] == 1.0).unwrap_or(usize::MAX))
        .collect();
    let mut d_raw = Array2::zeros(raw.dim());
    let mut loss = 0.0;
    for t in 0..t_len {
        for i in 0..b {
            let row = t * b + i;
            let w_off = if t <= ends[i] { scale } else { 0.0 };
            let nll = raw_nll_and_grad(raw.row(row), m, &targets[i][t], w_off, scale, d_raw.row_mut(row));
            loss += w_off * nll.offset + scale * nll.pen;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("decoder loss".into()));
    }

    let Some(grad) = grad else {
        return Ok(TeacherForced { loss, d_z: Array2::zeros((b, latent)) });
    };

    let d_h_all = params.head.backward(h_all.view(), d_raw.view(), &mut grad.head);
    let mut dh_next = Array2::<f64>::zeros((b, h));
    let mut dc_next = Array2::<f64>::zeros((b, h));
    let mut sum_dg = Array2::<f64>::zeros((b, 4 * h));
    let mut gw_s = Array2::<f64>::zeros((5, 4 * h));
    let mut gw_h = Array2::<f64>::zeros((h, 4 * h));
    for t in (0..t_len).rev() {
        let g = &gates[t];
        let (gi, gf, gg, go) = (
            g.slice(s![.., ..h]),
            g.slice(s![.., h..2 * h]),
            g.slice(s![.., 2 * h..3 * h]),
            g.slice(s![.., 3 * h..]),
        );
        let dh = &d_h_all.slice(s![t * b..(t + 1) * b, ..]) + &dh_next;
        let tc = &tanh_c[t];
        let mut dc = &dh * &go * &tc.mapv(|v| 1.0 - v * v);
        dc += &dc_next;
        let mut dg = Array2::<f64>::zeros((b, 4 * h));
        ndarray::Zip::from(dg.slice_mut(s![.., ..h]))
            .and(&dc)
            .and(&gg)
            .and(&gi)
            .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
        ndarray::Zip::from(dg.slice_mut(s![.., h..2 * h]))
            .and(&dc)
            .and(&cs[t])
            .and(&gf)
            .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
        ndarray::Zip::from(dg.slice_mut(s![.., 2 * h..3 * h]))
            .and(&dc)
            .and(&gi)
            .and(&gg)
            .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
        ndarray::Zip::from(dg.slice_mut(s![.., 3 * h..]))
            .and(&dh)
            .and(tc)
            .and(&go)
            .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (1.0 - o));
        dc_next = dc * gf;
        gw_s += &inputs[t].t().dot(&dg);
        gw_h += &hs[t].t().dot(&dg);
        sum_dg += &dg;
        dh_next = dg.dot(&w_h.t());
    }
    {
        let gw = &mut grad.lstm.weight;
        let mut block = gw.slice_mut(s![..5, ..]);
        block += &gw_s;
        let mut block = gw.slice_mut(s![5..5 + latent, ..]);
        block += &z.t().dot(&sum_dg);
        let mut block = gw.slice_mut(s![5 + latent.., ..]);
        block += &gw_h;
        grad.lstm.bias += &sum_dg.sum_axis(Axis(0));
    }
    let mut d_z = sum_dg.dot(&w_z.t());
    let d_init_act = concatenate![Axis(1), dh_next, dc_next];
    let d_init_pre = d_init_act * &init_out.mapv(|v| 1.0 - v * v);
    d_z += &params.init.backward(z.view(), d_init_pre.view(), &mut grad.init);
    Ok(TeacherForced { loss, d_z })
}

pub(crate) fn decoder_tensors<'a>(p: &'a DecoderParams, prefix: &str) -> Vec<(String, ndarray::ArrayViewD<'a, f64>)> {
    vec![
        (format!("{prefix}.init.weight"), p.init.weight.view().into_dyn()),
        (format!("{prefix}.init.bias"), p.init.bias.view().into_dyn()),
        (format!("{prefix}.lstm.weight"), p.lstm.weight.view().into_dyn()),
        (format!("{prefix}.lstm.bias"), p.lstm.bias.view().into_dyn()),
        (format!("{prefix}.head.weight"), p.head.weight.view().into_dyn()),
        (format!("{prefix}.head.bias"), p.head.bias.view().into_dyn()),
    ]
}

pub(crate) fn decoder_tensors_mut<'a>(
    p: &'a mut DecoderParams,
    prefix: &str,
) -> Vec<(String, ndarray::ArrayViewMutD<'a, f64>)> {
    vec![
        (format!("{prefix}.init.weight"), p.init.weight.view_mut().into_dyn()),
        (format!("{prefix}.init.bias"), p.init.bias.view_mut().into_dyn()),
        (format!("{prefix}.lstm.weight"), p.lstm.weight.view_mut().into_dyn()),
        (format!("{prefix}.lstm.bias"), p.lstm.bias.view_mut().into_dyn()),
        (format!("{prefix}.head.weight"), p.head.weight.view_mut().into_dyn()),
        (format!("{prefix}.head.bias"), p.head.bias.view_mut().into_dyn()),
    ]
}
