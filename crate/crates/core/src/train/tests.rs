use rand::SeedableRng;

use super::*;
use crate::decoder::DecoderConfig;
use crate::encoder::EncoderConfig;
use crate::model::ModelConfig;
use crate::sketch_data::{Pen, Step, VectorSketch};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        lattice_n: 8,
        encoder: EncoderConfig { d: 4, layers: 1, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 6, mixtures: 2, n_max: 16, temperature: 0.5 },
        offset_scale: 40.0,
        ..ModelConfig::default()
    }
}

fn square(side: f64) -> VectorSketch {
    VectorSketch::new(vec![
        Step::new(side, 0.0, Pen::Down),
        Step::new(0.0, side, Pen::Down),
        Step::new(-side, 0.0, Pen::Down),
        Step::new(0.0, -side, Pen::Down),
        Step::new(0.0, 0.0, Pen::End),
    ])
}

fn toy_data(cfg: &ModelConfig) -> Vec<PreparedSketch> {
    (0..6).map(|i| PreparedSketch::from_vector(&square(50.0 + 10.0 * i as f64), 0, cfg).unwrap()).collect()
}

fn tiny_model() -> Model {
    Model::new(tiny_config(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
}

#[test]
fn schedule_values() {
    assert_eq!(lr_schedule(0), 1e-3);
    assert!((lr_schedule(1) - 9.99e-4).abs() < 1e-18);
    assert!((lr_schedule(1000) - 3.6769542477e-4).abs() < 1e-12);
}

#[test]
fn elementwise_clip() {
    let mut g = tiny_model().params.zeros_like();
    {
        let mut t = g.tensors_mut();
        let (_, first) = &mut t[0];
        let vals = [0.5, 3.0, -3.0];
        for (v, x) in first.iter_mut().zip(vals) {
            *v = x;
        }
    }
    clip_gradients(&mut g, 1.0, ClipMode::Elementwise);
    let t = g.tensors();
    let got: Vec<f64> = t[0].1.iter().take(3).copied().collect();
    assert_eq!(got, vec![0.5, 1.0, -1.0]);
}

#[test]
fn global_norm_clip_bounds_norm() {
    let mut g = tiny_model().params.zeros_like();
    g.fill(2.0);
    clip_gradients(&mut g, 1.0, ClipMode::GlobalNorm);
    let norm: f64 = g.tensors().iter().flat_map(|(_, t)| t.iter().map(|v| v * v).collect::<Vec<_>>()).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn adam_matches_hand_computed_recurrence() {
    let model = tiny_model();
    let mut params = model.params.clone();
    params.fill(0.5);
    let mut opt = OptimizerState::new(&params);
    let cfg = TrainConfig::default();
    let expected = [0.49900000002, 0.4986541725414541, 0.4982741618890294];
    for (k, g) in [0.5, -0.2, 0.1].into_iter().enumerate() {
        let mut grad = params.zeros_like();
        grad.fill(g);
        opt.apply(&mut params, &grad, cfg.lr_at(k as u64), &cfg);
        for (_, t) in params.tensors() {
            assert!(t.iter().all(|&p| (p - expected[k]).abs() < 1e-12));
        }
    }
    assert_eq!(opt.iteration, 3);
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut model = tiny_model();
    let data = toy_data(&model.config);
    let before = model.params.clone();
    let mut opt = OptimizerState::new(&model.params);
    let cfg = TrainConfig { lr: 0.0, batch_size: 3, ..TrainConfig::default() };
    let batch: Vec<&PreparedSketch> = data.iter().take(3).collect();
    train_step(&mut model, &mut opt, &batch, &cfg, &mut iteration_rng(1, 0)).unwrap();
    assert_eq!(model.params, before);
}

#[test]
fn consecutive_steps_change_the_loss() {
    let mut model = tiny_model();
    let data = toy_data(&model.config);
    let mut opt = OptimizerState::new(&model.params);
    let cfg = TrainConfig { batch_size: 3, lr: 1e-2, ..TrainConfig::default() };
    let batch: Vec<&PreparedSketch> = data.iter().take(3).collect();
    let a = train_step(&mut model, &mut opt, &batch, &cfg, &mut iteration_rng(1, 0)).unwrap();
    let b = train_step(&mut model, &mut opt, &batch, &cfg, &mut iteration_rng(1, 0)).unwrap();
    assert_ne!(a.loss, b.loss);
}

#[test]
fn fully_masked_batch_is_rejected() {
    let mut model = tiny_model();
    let data = toy_data(&model.config);
    let mut opt = OptimizerState::new(&model.params);
    let cfg = TrainConfig { p_mask_train: 1.0, ..TrainConfig::default() };
    let batch: Vec<&PreparedSketch> = data.iter().collect();
    let err = train_step(&mut model, &mut opt, &batch, &cfg, &mut iteration_rng(1, 0)).unwrap_err();
    assert!(matches!(err, Error::AllItemsSkipped(6)));
}

#[test]
fn zero_iterations_write_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = tiny_model();
    let data = toy_data(&model.config);
    let mut opt = OptimizerState::new(&model.params);
    let cfg = TrainConfig { iterations: 0, ..TrainConfig::default() };
    let report = fit(&data, &mut model, &mut opt, &cfg, dir.path(), |_| {}).unwrap();
    assert!(report.losses.is_empty() && report.checkpoints.is_empty());
    let (loaded, _, _) = load_training_checkpoint(&report.final_checkpoint).unwrap();
    assert_eq!(loaded, model);
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = tiny_model();
    let mut opt = OptimizerState::new(&model.params);
    let err = fit(&[], &mut model, &mut opt, &TrainConfig::default(), dir.path(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::DatasetEmpty));
}

#[test]
fn resume_reproduces_the_loss_sequence() {
    let cfg = TrainConfig { iterations: 8, batch_size: 4, checkpoint_every: 4, seed: 5, ..TrainConfig::default() };
    let full_dir = tempfile::tempdir().unwrap();
    let mut model = tiny_model();
    let data = toy_data(&model.config);
    let mut opt = OptimizerState::new(&model.params);
    let full = fit(&data, &mut model, &mut opt, &cfg, full_dir.path(), |_| {}).unwrap();
    assert_eq!(full.losses.len(), 8);
    let csv = std::fs::read_to_string(full_dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);

    let resume_dir = tempfile::tempdir().unwrap();
    let (mut resumed, mut ropt, saved) = load_training_checkpoint(&full.checkpoints[0]).unwrap();
    assert_eq!(ropt.iteration, 4);
    assert_eq!(saved.as_ref(), Some(&cfg));
    let tail = fit(&data, &mut resumed, &mut ropt, &cfg, resume_dir.path(), |_| {}).unwrap();
    assert_eq!(tail.losses, full.losses[4..]);
    assert_eq!(resumed, model);
}

#[test]
fn smoothing_window() {
    let losses: Vec<LossRecord> =
        (1..=10).map(|i| LossRecord { iteration: i, lr: 0.0, loss: i as f64 }).collect();
    assert_eq!(smoothed_loss(&losses, 10, 4), Some(8.5));
    assert_eq!(smoothed_loss(&losses, 3, 4), None);
}
