//! Run configuration as flat `key = value` text.
//!
//! Lines starting with `#` and blank lines are ignored. Keys are
//! `section.field`, listed by [`RunConfig::keys`]; unknown keys and repeated
//! keys are errors. Values are layered, later layers winning: built-in
//! defaults, then the config file, then `--set key=value` overrides in
//! order, then dedicated command-line flags such as `--seed`.

use std::fmt::Write as _;
use std::path::Path;

use attntrack_core::augment::AugmentConfig;
use attntrack_core::loss::LossConfig;
use attntrack_core::model::ModelConfig;
use attntrack_core::optim::{OptimConfig, OptimizerKind};
use attntrack_core::synth::{Layout, SynthConfig};
use attntrack_core::tracker::{FilterMode, GreedyConfig, TrackerConfig};
use attntrack_core::train::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub greedy: GreedyConfig,
    pub synth: SynthConfig,
    /// Jitter applied to gt boxes when writing public detections.
    pub det_jitter: f64,
    pub eval_iou_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig {
                d_model: 32,
                n_heads: 4,
                n_enc_layers: 1,
                n_dec_layers: 2,
                n_object_queries: 10,
                patch_size: 8,
                n_classes: 1,
                ffn_dim: 64,
                aux_loss: false,
            },
            train: TrainConfig {
                steps: 5000,
                loss: LossConfig::default(),
                augment: AugmentConfig {
                    frame_range: 1,
                    past_only: true,
                    sim_crop_frac: 0.0,
                    jitter_frac: 0.0,
                    ..AugmentConfig::default()
                },
                optim: OptimConfig {
                    kind: OptimizerKind::Adam,
                    lr: 1e-3,
                    clip_norm: 1.0,
                    lr_drop_step: 4000,
                    ..OptimConfig::default()
                },
                sim_prob: 0.0,
                chain_len: 8,
                batch_size: 2,
                seed: 0,
            },
            tracker: TrackerConfig::default(),
            greedy: GreedyConfig::default(),
            synth: SynthConfig::crossing(),
            det_jitter: 0.01,
            eval_iou_threshold: 0.5,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| CliError::Config(format!("invalid value for {key}: {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("invalid value for {key}: {v:?}"))),
    }
}

macro_rules! fields {
    ($($key:literal => $get:expr, $set:expr;)*) => {
        const KEYS: &[&str] = &[$($key),*];

        fn set_field(c: &mut RunConfig, key: &str, v: &str) -> Result<()> {
            match key {
                $($key => {
                    let f: fn(&mut RunConfig, &str, &str) -> Result<()> = $set;
                    f(c, key, v)
                })*
                _ => Err(CliError::Config(format!("unknown key {key:?}"))),
            }
        }

        fn get_field(c: &RunConfig, key: &str) -> String {
            match key {
                $($key => {
                    let f: fn(&RunConfig) -> String = $get;
                    f(c)
                })*
                _ => unreachable!("listed key"),
            }
        }
    };
}

fn kind_name(k: OptimizerKind) -> String {
    match k {
        OptimizerKind::Sgd => "sgd".into(),
        OptimizerKind::Adam => "adam".into(),
    }
}

fn filter_name(m: FilterMode) -> String {
    match m {
        FilterMode::None => "none".into(),
        FilterMode::Iou => "iou".into(),
        FilterMode::CenterDistance => "cd".into(),
    }
}

pub fn parse_filter(v: &str) -> Result<FilterMode> {
    match v {
        "none" => Ok(FilterMode::None),
        "iou" => Ok(FilterMode::Iou),
        "cd" => Ok(FilterMode::CenterDistance),
        _ => Err(CliError::Config(format!("filter must be none, iou or cd, not {v:?}"))),
    }
}

fields! {
    "seed" => |c| c.seed.to_string(), |c, k, v| { c.seed = parse(k, v)?; Ok(()) };

    "model.d_model" => |c| c.model.d_model.to_string(), |c, k, v| { c.model.d_model = parse(k, v)?; Ok(()) };
    "model.n_heads" => |c| c.model.n_heads.to_string(), |c, k, v| { c.model.n_heads = parse(k, v)?; Ok(()) };
    "model.n_enc_layers" => |c| c.model.n_enc_layers.to_string(), |c, k, v| { c.model.n_enc_layers = parse(k, v)?; Ok(()) };
    "model.n_dec_layers" => |c| c.model.n_dec_layers.to_string(), |c, k, v| { c.model.n_dec_layers = parse(k, v)?; Ok(()) };
    "model.n_object_queries" => |c| c.model.n_object_queries.to_string(), |c, k, v| { c.model.n_object_queries = parse(k, v)?; Ok(()) };
    "model.patch_size" => |c| c.model.patch_size.to_string(), |c, k, v| { c.model.patch_size = parse(k, v)?; Ok(()) };
    "model.n_classes" => |c| c.model.n_classes.to_string(), |c, k, v| { c.model.n_classes = parse(k, v)?; Ok(()) };
    "model.ffn_dim" => |c| c.model.ffn_dim.to_string(), |c, k, v| { c.model.ffn_dim = parse(k, v)?; Ok(()) };
    "model.aux_loss" => |c| c.model.aux_loss.to_string(), |c, k, v| { c.model.aux_loss = parse_bool(k, v)?; Ok(()) };

    "loss.lambda_cls" => |c| c.train.loss.weights.lambda_cls.to_string(), |c, k, v| { c.train.loss.weights.lambda_cls = parse(k, v)?; Ok(()) };
    "loss.lambda_l1" => |c| c.train.loss.weights.lambda_l1.to_string(), |c, k, v| { c.train.loss.weights.lambda_l1 = parse(k, v)?; Ok(()) };
    "loss.lambda_iou" => |c| c.train.loss.weights.lambda_iou.to_string(), |c, k, v| { c.train.loss.weights.lambda_iou = parse(k, v)?; Ok(()) };
    "loss.background_weight" => |c| c.train.loss.background_weight.to_string(), |c, k, v| { c.train.loss.background_weight = parse(k, v)?; Ok(()) };
    "loss.supervise_prev_frame" => |c| c.train.loss.supervise_prev_frame.to_string(), |c, k, v| { c.train.loss.supervise_prev_frame = parse_bool(k, v)?; Ok(()) };

    "augment.p_fn" => |c| c.train.augment.p_fn.to_string(), |c, k, v| { c.train.augment.p_fn = parse(k, v)?; Ok(()) };
    "augment.p_fp" => |c| c.train.augment.p_fp.to_string(), |c, k, v| { c.train.augment.p_fp = parse(k, v)?; Ok(()) };
    "augment.frame_range" => |c| c.train.augment.frame_range.to_string(), |c, k, v| { c.train.augment.frame_range = parse(k, v)?; Ok(()) };
    "augment.past_only" => |c| c.train.augment.past_only.to_string(), |c, k, v| { c.train.augment.past_only = parse_bool(k, v)?; Ok(()) };
    "augment.sim_crop_frac" => |c| c.train.augment.sim_crop_frac.to_string(), |c, k, v| { c.train.augment.sim_crop_frac = parse(k, v)?; Ok(()) };
    "augment.jitter_frac" => |c| c.train.augment.jitter_frac.to_string(), |c, k, v| { c.train.augment.jitter_frac = parse(k, v)?; Ok(()) };

    "train.steps" => |c| c.train.steps.to_string(), |c, k, v| { c.train.steps = parse(k, v)?; Ok(()) };
    "train.sim_prob" => |c| c.train.sim_prob.to_string(), |c, k, v| { c.train.sim_prob = parse(k, v)?; Ok(()) };
    "train.chain_len" => |c| c.train.chain_len.to_string(), |c, k, v| { c.train.chain_len = parse(k, v)?; Ok(()) };
    "train.batch_size" => |c| c.train.batch_size.to_string(), |c, k, v| { c.train.batch_size = parse(k, v)?; Ok(()) };

    "optim.kind" => |c| kind_name(c.train.optim.kind), |c, k, v| {
        c.train.optim.kind = match v {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            _ => return Err(CliError::Config(format!("invalid value for {k}: {v:?}"))),
        };
        Ok(())
    };
    "optim.lr" => |c| c.train.optim.lr.to_string(), |c, k, v| { c.train.optim.lr = parse(k, v)?; Ok(()) };
    "optim.momentum" => |c| c.train.optim.momentum.to_string(), |c, k, v| { c.train.optim.momentum = parse(k, v)?; Ok(()) };
    "optim.beta2" => |c| c.train.optim.beta2.to_string(), |c, k, v| { c.train.optim.beta2 = parse(k, v)?; Ok(()) };
    "optim.weight_decay" => |c| c.train.optim.weight_decay.to_string(), |c, k, v| { c.train.optim.weight_decay = parse(k, v)?; Ok(()) };
    "optim.clip_norm" => |c| c.train.optim.clip_norm.to_string(), |c, k, v| { c.train.optim.clip_norm = parse(k, v)?; Ok(()) };
    "optim.lr_drop_step" => |c| c.train.optim.lr_drop_step.to_string(), |c, k, v| { c.train.optim.lr_drop_step = parse(k, v)?; Ok(()) };
    "optim.lr_drop_factor" => |c| c.train.optim.lr_drop_factor.to_string(), |c, k, v| { c.train.optim.lr_drop_factor = parse(k, v)?; Ok(()) };

    "tracker.sigma_object" => |c| c.tracker.sigma_object.to_string(), |c, k, v| { c.tracker.sigma_object = parse(k, v)?; Ok(()) };
    "tracker.sigma_track" => |c| c.tracker.sigma_track.to_string(), |c, k, v| { c.tracker.sigma_track = parse(k, v)?; Ok(()) };
    "tracker.sigma_nms" => |c| c.tracker.sigma_nms.to_string(), |c, k, v| { c.tracker.sigma_nms = parse(k, v)?; Ok(()) };
    "tracker.t_track_reid" => |c| c.tracker.t_track_reid.to_string(), |c, k, v| { c.tracker.t_track_reid = parse(k, v)?; Ok(()) };
    "tracker.sigma_track_reid" => |c| c.tracker.sigma_track_reid.to_string(), |c, k, v| { c.tracker.sigma_track_reid = parse(k, v)?; Ok(()) };
    "tracker.reid" => |c| c.tracker.reid.to_string(), |c, k, v| { c.tracker.reid = parse_bool(k, v)?; Ok(()) };
    "tracker.filter" => |c| filter_name(c.tracker.filter_mode), |c, _, v| { c.tracker.filter_mode = parse_filter(v)?; Ok(()) };
    "tracker.filter_iou_threshold" => |c| c.tracker.filter_iou_threshold.to_string(), |c, k, v| { c.tracker.filter_iou_threshold = parse(k, v)?; Ok(()) };
    "tracker.greedy_max_center_distance" => |c| c.greedy.max_center_distance.to_string(), |c, k, v| { c.greedy.max_center_distance = parse(k, v)?; Ok(()) };

    "synth.n_objects" => |c| c.synth.n_objects.to_string(), |c, k, v| { c.synth.n_objects = parse(k, v)?; Ok(()) };
    "synth.seq_len" => |c| c.synth.seq_len.to_string(), |c, k, v| { c.synth.seq_len = parse(k, v)?; Ok(()) };
    "synth.width" => |c| c.synth.image_size.0.to_string(), |c, k, v| { c.synth.image_size.0 = parse(k, v)?; Ok(()) };
    "synth.height" => |c| c.synth.image_size.1.to_string(), |c, k, v| { c.synth.image_size.1 = parse(k, v)?; Ok(()) };
    "synth.speed_min" => |c| c.synth.speed_range.0.to_string(), |c, k, v| { c.synth.speed_range.0 = parse(k, v)?; Ok(()) };
    "synth.speed_max" => |c| c.synth.speed_range.1.to_string(), |c, k, v| { c.synth.speed_range.1 = parse(k, v)?; Ok(()) };
    "synth.size_min" => |c| c.synth.size_range.0.to_string(), |c, k, v| { c.synth.size_range.0 = parse(k, v)?; Ok(()) };
    "synth.size_max" => |c| c.synth.size_range.1.to_string(), |c, k, v| { c.synth.size_range.1 = parse(k, v)?; Ok(()) };
    "synth.birth_prob" => |c| c.synth.birth_prob.to_string(), |c, k, v| { c.synth.birth_prob = parse(k, v)?; Ok(()) };
    "synth.death_prob" => |c| c.synth.death_prob.to_string(), |c, k, v| { c.synth.death_prob = parse(k, v)?; Ok(()) };
    "synth.crossing_prob" => |c| c.synth.crossing_prob.to_string(), |c, k, v| { c.synth.crossing_prob = parse(k, v)?; Ok(()) };
    "synth.motion_noise" => |c| c.synth.motion_noise.to_string(), |c, k, v| { c.synth.motion_noise = parse(k, v)?; Ok(()) };
    "synth.crossing_offset" => |c| c.synth.crossing_offset.to_string(), |c, k, v| { c.synth.crossing_offset = parse(k, v)?; Ok(()) };
    "synth.layout" => |c| match c.synth.layout { Layout::Random => "random".into(), Layout::Crossing => "crossing".into() }, |c, k, v| {
        c.synth.layout = match v {
            "random" => Layout::Random,
            "crossing" => Layout::Crossing,
            _ => return Err(CliError::Config(format!("invalid value for {k}: {v:?}"))),
        };
        Ok(())
    };
    "synth.det_jitter" => |c| c.det_jitter.to_string(), |c, k, v| { c.det_jitter = parse(k, v)?; Ok(()) };

    "eval.iou_threshold" => |c| c.eval_iou_threshold.to_string(), |c, k, v| { c.eval_iou_threshold = parse(k, v)?; Ok(()) };
}

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        set_field(self, key, value)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        KEYS.contains(&key).then(|| get_field(self, key))
    }

    /// Applies the `key = value` lines of `text`.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CliError::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(err(format!("repeated key {k:?}")));
            }
            self.set(k, v).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Pushes the shared seed into every component and checks invariants.
    pub fn finalize(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.train.augment.seed = self.seed;
        self.synth.seed = self.seed;
        self.model.validate()?;
        self.train.validate()?;
        self.tracker.validate()?;
        self.synth.validate()?;
        if !(0.0..=1.0).contains(&self.eval_iou_threshold) {
            return Err(CliError::Config("eval.iou_threshold must lie in [0, 1]".into()));
        }
        if !(self.det_jitter >= 0.0 && self.det_jitter < 1.0) {
            return Err(CliError::Config("synth.det_jitter must lie in [0, 1)".into()));
        }
        Ok(self)
    }

    /// Every key with its value, one per line, in the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            writeln!(s, "{k} = {}", get_field(self, k)).expect("writing to a String");
        }
        s
    }
}
