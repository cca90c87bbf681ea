//! Flat `key = value` configuration file (TOML syntax).
//!
//! Every key is optional; unknown keys are rejected. Precedence is
//! defaults < config file < command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sketchlattice::encoder::Pooling;
use sketchlattice::train::{ClipMode, TrainConfig};
use sketchlattice::{EmbedMode, Error, ModelConfig, Proximity, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // lattice and graph
    pub n: Option<usize>,
    pub proximity: Option<Proximity>,
    pub distance_threshold: Option<f64>,
    pub self_loops: Option<bool>,
    pub embed_mode: Option<EmbedMode>,
    // encoder
    pub d: Option<usize>,
    pub layers: Option<usize>,
    pub dropout: Option<f64>,
    pub pooling: Option<Pooling>,
    pub residual: Option<bool>,
    pub mlp_depth: Option<usize>,
    pub normalize_adjacency: Option<bool>,
    pub bn_momentum: Option<f64>,
    // decoder
    pub hidden: Option<usize>,
    pub mixtures: Option<usize>,
    pub n_max: Option<usize>,
    pub temperature: Option<f64>,
    // training
    pub lr: Option<f64>,
    pub decay: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub clip: Option<f64>,
    pub clip_mode: Option<ClipMode>,
    pub batch_size: Option<usize>,
    pub iterations: Option<u64>,
    pub p_mask_train: Option<f64>,
    pub checkpoint_every: Option<u64>,
    pub test_per_category: Option<usize>,
    // shared with the command line
    pub seed: Option<u64>,
    pub pmask: Option<f64>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<FileConfig, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn apply_model(&self, m: &mut ModelConfig) {
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = self.$src.clone() {
                    m.$($dst)+ = v;
                }
            };
        }
        set!(n => lattice_n);
        set!(proximity => graph.proximity);
        set!(distance_threshold => graph.distance_threshold);
        set!(self_loops => graph.self_loops);
        set!(embed_mode => graph.embed_mode);
        set!(embed_mode => encoder.embed_mode);
        set!(d => encoder.d);
        set!(layers => encoder.layers);
        set!(dropout => encoder.dropout);
        set!(pooling => encoder.pooling);
        set!(residual => encoder.residual);
        set!(mlp_depth => encoder.mlp_depth);
        set!(normalize_adjacency => encoder.normalize_adjacency);
        set!(bn_momentum => encoder.bn_momentum);
        set!(hidden => decoder.hidden);
        set!(mixtures => decoder.mixtures);
        set!(n_max => decoder.n_max);
        set!(temperature => decoder.temperature);
    }

    pub fn apply_train(&self, t: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),+) => {
                $(if let Some(v) = self.$f {
                    t.$f = v;
                })+
            };
        }
        set!(lr, decay, beta1, beta2, eps, clip, clip_mode, batch_size, iterations, p_mask_train, checkpoint_every, seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies() {
        let cfg = FileConfig::parse("d = 64\nlayers = 2\nproximity = \"nearest\"\nclip_mode = \"global-norm\"\niterations = 10\n").unwrap();
        let mut m = ModelConfig::default();
        cfg.apply_model(&mut m);
        assert_eq!(m.encoder.d, 64);
        assert_eq!(m.graph.proximity, Proximity::Nearest);
        let mut t = TrainConfig::default();
        cfg.apply_train(&mut t);
        assert_eq!(t.clip_mode, ClipMode::GlobalNorm);
        assert_eq!(t.iterations, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(FileConfig::parse("depth = 3\n").is_err());
        assert!(FileConfig::parse("d = \"wide\"\n").is_err());
    }
}
