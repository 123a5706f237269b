//! Subcommands. Each returns the text it prints on stdout so callers and
//! tests can run them in-process.

use std::path::{Path, PathBuf};

use attntrack_core::metrics::clear_mot;
use attntrack_core::model::Model;
use attntrack_core::sequence::{LabeledObject, SequenceGT};
use attntrack_core::synth::{generate_sequence, public_detections};
use attntrack_core::tracker::{FilterMode, GreedyCenterTracker, TrackOutput, Tracker};
use attntrack_core::train::{Trainer, TrainingData};
use attntrack_core::BoundingBox;
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_filter, RunConfig};
use crate::error::{CliError, Result};
use crate::log::TrainLog;
use crate::mot::{self, MotRecord};
use crate::report::Report;
use crate::seqdir::{SeqDir, SeqInfo};

#[derive(Debug, Parser)]
#[command(name = "attntrack", version, about = "Train and run a tracking-by-attention model on synthetic sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Precedence: defaults, `--config`,
/// `--set` in order, then `--seed`.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        for kv in &self.set {
            cfg.apply_override(kv)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.finalize()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence directory.
    Simulate(SimulateArgs),
    /// Train a model on a sequence directory.
    Train(TrainArgs),
    /// Run the tracker over a sequence and write a MOT results file.
    Track(TrackArgs),
    /// Score results against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output sequence directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sequence directory to train on.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log; defaults to the checkpoint path with a `.log` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint until `train.steps` total updates.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sequence directory to track.
    #[arg(long)]
    pub seq: PathBuf,
    /// Results file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict initializations to the sequence's `det/det.txt`. Uses IoU
    /// filtering unless `--filter` says otherwise.
    #[arg(long)]
    pub public_dets: bool,
    /// Initialization filter: `iou` or `cd` (center distance).
    #[arg(long, value_name = "MODE")]
    pub filter: Option<String>,
    /// Detection-only baseline with greedy center-distance linking.
    #[arg(long)]
    pub no_track_queries: bool,
    /// Delete tracks as soon as they drop below the track threshold.
    #[arg(long)]
    pub no_reid: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// A sequence directory, or a directory of sequence directories.
    #[arg(long)]
    pub gt: PathBuf,
    /// A results file for a single sequence, or a directory holding
    /// `<sequence>.txt` per sequence.
    #[arg(long)]
    pub results: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Train(a) => train(&a),
        Command::Track(a) => track(&a),
        Command::Eval(a) => eval(&a),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let (frames, gt) = generate_sequence(&cfg.synth)?;
    let dets = public_detections(&gt, cfg.det_jitter, cfg.seed);
    let dir = SeqDir::new(&args.out);
    let info = SeqInfo {
        name: dir.name(),
        seq_length: frames.len(),
        width: gt.image_size.0,
        height: gt.image_size.1,
        seed: Some(cfg.seed),
    };
    dir.write(&info, &frames, &gt, &dets)?;
    Ok(format!(
        "# seed={}\nwrote {} frames, {} objects to {}\n",
        cfg.seed,
        frames.len(),
        gt.identities().len(),
        args.out.display()
    ))
}

fn load_sequence(path: &Path) -> Result<(SeqDir, SeqInfo)> {
    let dir = SeqDir::new(path);
    let info = dir.info()?;
    Ok((dir, info))
}

pub fn train(args: &TrainArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let (dir, info) = load_sequence(&args.data)?;
    let frames = dir.read_frames(&info)?;
    let gt = dir.read_gt(&info)?;
    let log_path = args.log.clone().unwrap_or_else(|| args.out.with_extension("log"));

    let (mut trainer, mut log) = match &args.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.config != cfg.model {
                return Err(CliError::Checkpoint {
                    path: p.clone(),
                    message: "model config differs from the run config".into(),
                });
            }
            let model = ck.model()?;
            let opt = ck.optimizer.restore(cfg.train.optim, model.params())?;
            (Trainer::resume(model, opt, cfg.train)?, TrainLog::append(&log_path, cfg.seed)?)
        }
        None => {
            let model = Model::new(cfg.model, cfg.seed)?;
            (Trainer::new(model, cfg.train)?, TrainLog::create(&log_path, cfg.seed)?)
        }
    };

    let data = TrainingData { frames: &frames, gt: &gt };
    let mut last = None;
    while trainer.steps_done() < cfg.train.steps {
        match trainer.step(data) {
            Ok(r) => {
                log.record(&r)?;
                last = Some(r);
            }
            Err(e) => {
                log.finish()?;
                return Err(e.into());
            }
        }
    }
    log.finish()?;
    let (model, opt) = trainer.into_parts();
    Checkpoint::new(&model, &opt, cfg.seed).save(&args.out)?;
    let mut out = format!("# seed={}\n", cfg.seed);
    match last {
        Some(r) => out.push_str(&format!("step {} loss {:.6}\n", r.step, r.loss.total)),
        None => out.push_str(&format!("already at step {}\n", opt.step_count())),
    }
    Ok(out)
}

/// Runs the tracker over in-memory frames and returns hypotheses in the
/// sequence's normalized coordinates, with per-box scores.
pub fn track_frames(
    model: &Model,
    cfg: &RunConfig,
    frames: &[attntrack_core::image::Image],
    dets: Option<&[Vec<BoundingBox>]>,
    use_track_queries: bool,
) -> Result<Vec<Vec<TrackOutput>>> {
    let mut decoder = model;
    let mut out = Vec::with_capacity(frames.len());
    if use_track_queries {
        let mut tracker = Tracker::new(cfg.tracker)?;
        for t in 0..frames.len() {
            let prev = &frames[t.saturating_sub(1)];
            let d = dets.map(|d| d.get(t).map(Vec::as_slice).unwrap_or(&[]));
            out.push(tracker.step(&mut decoder, prev, &frames[t], d)?);
        }
    } else {
        let mut tracker = GreedyCenterTracker::new(cfg.greedy)?;
        for f in frames {
            // Object queries are trained on a frame paired with itself.
            out.push(tracker.step(&mut decoder, f, f)?);
        }
    }
    Ok(out)
}

pub fn hypotheses(outputs: &[Vec<TrackOutput>], image_size: (u32, u32)) -> SequenceGT {
    let mut seq = SequenceGT::new(image_size, outputs.len());
    for (t, frame) in outputs.iter().enumerate() {
        seq.frames[t] = frame.iter().map(|o| LabeledObject::new(o.identity, o.bbox)).collect();
    }
    seq
}

pub fn track(args: &TrackArgs) -> Result<String> {
    let mut cfg = args.common.resolve()?;
    if let Some(f) = &args.filter {
        cfg.tracker.filter_mode = parse_filter(f)?;
    }
    if args.public_dets && cfg.tracker.filter_mode == FilterMode::None {
        cfg.tracker.filter_mode = FilterMode::Iou;
    }
    if args.no_reid {
        cfg.tracker.reid = false;
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let model = ck.model()?;
    let (dir, info) = load_sequence(&args.seq)?;
    let frames = dir.read_frames(&info)?;
    let dets = match cfg.tracker.filter_mode {
        FilterMode::None => None,
        _ => Some(dir.read_dets(&info)?),
    };
    let outputs = track_frames(&model, &cfg, &frames, dets.as_deref(), !args.no_track_queries)?;

    let (w, h) = (info.width as f64, info.height as f64);
    let mut recs = Vec::new();
    for (t, frame) in outputs.iter().enumerate() {
        for o in frame {
            let p = attntrack_core::bbox::denormalize(&o.bbox, w, h);
            recs.push(MotRecord {
                frame: t as u32 + 1,
                id: o.identity as i64,
                left: p.left,
                top: p.top,
                width: p.width,
                height: p.height,
                conf: o.score,
            });
        }
    }
    mot::write_mot(&args.out, &recs)?;
    let n_ids = recs.iter().map(|r| r.id).collect::<std::collections::BTreeSet<_>>().len();
    Ok(format!(
        "# seed={}\nwrote {} boxes, {} identities to {}\n",
        cfg.seed,
        recs.len(),
        n_ids,
        args.out.display()
    ))
}

pub fn eval(args: &EvalArgs) -> Result<String> {
    let cfg = args.common.resolve()?;
    let root = SeqDir::new(&args.gt);
    let pairs: Vec<(SeqDir, PathBuf)> = if root.exists() {
        let results = if args.results.is_dir() {
            args.results.join(format!("{}.txt", root.name()))
        } else {
            args.results.clone()
        };
        vec![(root, results)]
    } else {
        let entries = std::fs::read_dir(&args.gt).map_err(|e| CliError::io(&args.gt, e))?;
        let mut seqs = Vec::new();
        for e in entries {
            let e = e.map_err(|e| CliError::io(&args.gt, e))?;
            let d = SeqDir::new(e.path());
            if d.exists() {
                seqs.push(d);
            }
        }
        seqs.sort_by_key(SeqDir::name);
        if seqs.is_empty() {
            return Err(CliError::Config(format!("{}: no sequence directories found", args.gt.display())));
        }
        seqs.into_iter()
            .map(|d| {
                let r = args.results.join(format!("{}.txt", d.name()));
                (d, r)
            })
            .collect()
    };
    let missing: Vec<String> = pairs.iter().filter(|(_, r)| !r.is_file()).map(|(d, _)| d.name()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingSequences(missing));
    }

    let mut rows = Vec::new();
    for (dir, results) in &pairs {
        let info = dir.info()?;
        let gt = dir.read_gt(&info)?;
        let recs = mot::read_mot(results)?;
        let hyp = mot::sequence_from_records(&recs, (info.width, info.height), info.seq_length, results)?;
        rows.push((dir.name(), clear_mot(&gt, &hyp, cfg.eval_iou_threshold)));
    }
    let report = Report::new(cfg.seed, rows);
    if let Some(p) = &args.csv {
        std::fs::write(p, report.to_csv()).map_err(|e| CliError::io(p, e))?;
    }
    Ok(report.to_table())
}
