use attntrack_core::augment::AugmentConfig;
use attntrack_core::model::{Model, ModelConfig};
use attntrack_core::optim::{OptimConfig, OptimizerKind};
use attntrack_core::synth::{generate_sequence, SynthConfig};
use attntrack_core::train::{TrainConfig, Trainer, TrainingData};

#[test]
fn overfits_a_single_pair() {
    let (frames, gt) = generate_sequence(&SynthConfig {
        n_objects: 2,
        seq_len: 2,
        image_size: (32, 32),
        birth_prob: 0.0,
        death_prob: 0.0,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        n_object_queries: 4,
        patch_size: 8,
        ffn_dim: 32,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 2000,
        augment: AugmentConfig { frame_range: 1, past_only: true, ..AugmentConfig::none() },
        optim: OptimConfig { kind: OptimizerKind::Adam, lr: 3e-3, clip_norm: 1.0, lr_drop_step: 1200, ..OptimConfig::default() },
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(Model::new(cfg, 0).unwrap(), tc).unwrap();
    let data = TrainingData { frames: &frames, gt: &gt };
    let log = t.run(data, |_| {}).unwrap();
    assert_eq!(log.len(), 2000);
    let tail = log[log.len() - 20..].iter().map(|r| r.loss.total).fold(0.0, f64::max);
    assert!(tail < 0.1, "final losses up to {tail}");
}
