use attntrack_core::assignment::Provenance;
use attntrack_core::augment::AugmentConfig;
use attntrack_core::loss::{two_step_loss, FramePair, LossConfig};
use attntrack_core::model::{Model, ModelConfig};
use attntrack_core::synth::{generate_sequence, SynthConfig};
use attntrack_core::Graph;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_model(seed: u64) -> Model {
    Model::new(
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            n_object_queries: 6,
            patch_size: 8,
            ffn_dim: 8,
            ..ModelConfig::default()
        },
        seed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With every track query dropped, frame `t` ground truth can only be
    /// matched to object queries.
    #[test]
    fn dropping_all_track_queries_sends_gt_to_object_queries(seed in any::<u64>(), n_objects in 1usize..4, p_fp in 0.0f64..1.0) {
        let (frames, gt) = generate_sequence(&SynthConfig { n_objects, seq_len: 2, image_size: (32, 32), seed, ..SynthConfig::default() }).unwrap();
        let model = tiny_model(seed);
        let aug = AugmentConfig { p_fn: 1.0, p_fp, ..AugmentConfig::none() };
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = FramePair { prev: &frames[0], curr: &frames[1], prev_gt: &gt.frames[0], curr_gt: &gt.frames[1] };
        let out = two_step_loss(&model, &mut g, pair, &LossConfig::default(), &aug, &mut rng).unwrap();
        prop_assert!(out.track_slots.iter().all(|s| s.identity.is_none()));
        prop_assert_eq!(out.curr_assignment.pairs.len(), gt.frames[1].len());
        let n_obj = model.config().n_object_queries;
        for p in &out.curr_assignment.pairs {
            prop_assert_eq!(p.provenance, Provenance::ByCost);
            prop_assert!(p.prediction < n_obj);
        }
        prop_assert!(out.total.values(&g).unwrap().total.is_finite());
    }
}
