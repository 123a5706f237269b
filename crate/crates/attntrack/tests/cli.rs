use std::path::Path;
use std::process::{Command, Output};

use attntrack::mot::read_mot;
use attntrack::seqdir::SeqDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attntrack")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Asserts failure and returns the single stderr line.
fn fails(args: &[&str], class: &str) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{class}]: ")), "{err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, seed: &str) {
    ok(&["simulate", "--out", s(dir), "--seed", seed, "--set", "synth.seq_len=6"]);
}

fn train_tiny(seq: &Path, ckpt: &Path) {
    ok(&["train", "--data", s(seq), "--out", s(ckpt), "--set", "train.steps=3", "--set", "synth.seq_len=6"]);
}

#[test]
fn simulate_writes_a_readable_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("s");
    let out = ok(&["simulate", "--out", s(&seq), "--seed", "4"]);
    assert!(out.starts_with("# seed=4\n"));
    let dir = SeqDir::new(&seq);
    let info = dir.info().unwrap();
    assert_eq!((info.seq_length, info.width, info.height, info.seed), (20, 64, 64, Some(4)));
    let recs = read_mot(&dir.gt_path()).unwrap();
    assert_eq!(recs.len(), 60);
    let gt = dir.read_gt(&info).unwrap();
    gt.validate().unwrap();
    assert_eq!(dir.read_frames(&info).unwrap().len(), 20);
    assert_eq!(dir.read_dets(&info).unwrap().iter().map(Vec::len).sum::<usize>(), 60);
}

#[test]
fn zero_objects_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    fails(&["simulate", "--out", s(&tmp.path().join("s")), "--set", "synth.n_objects=0"], "config");
    fails(&["simulate", "--out", s(&tmp.path().join("s")), "--set", "no.such_key=1"], "config");
}

#[test]
fn config_file_then_set_then_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# small\nsynth.seq_len = 4\nseed = 1\n").unwrap();
    let seq = tmp.path().join("s");
    let out = ok(&["simulate", "--out", s(&seq), "--config", s(&cfg), "--set", "synth.seq_len=5", "--seed", "9"]);
    assert!(out.starts_with("# seed=9\n"));
    assert_eq!(SeqDir::new(&seq).info().unwrap().seq_length, 5);

    std::fs::write(&cfg, "synth.seq_len = 4\nsynth.seq_len = 5\n").unwrap();
    let err = fails(&["simulate", "--out", s(&seq), "--config", s(&cfg)], "parse");
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("s");
    simulate(&seq, "2");
    let table = ok(&["eval", "--gt", s(&seq), "--results", s(&SeqDir::new(&seq).gt_path())]);
    let row = table.lines().find(|l| l.starts_with("s ")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(&cols[1..], &["100.0", "100.0", "3", "0", "0", "0", "0"]);
}

#[test]
fn multi_sequence_eval_and_missing_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("gt");
    let res = tmp.path().join("res");
    std::fs::create_dir_all(&res).unwrap();
    for (name, seed) in [("a", "1"), ("b", "2"), ("c", "3")] {
        simulate(&root.join(name), seed);
    }
    std::fs::copy(root.join("a/gt/gt.txt"), res.join("a.txt")).unwrap();
    let err = fails(&["eval", "--gt", s(&root), "--results", s(&res)], "missing-sequence");
    assert!(err.contains("b, c"), "{err}");

    // b drops half its boxes: the ALL row must come from summed counts
    std::fs::copy(root.join("c/gt/gt.txt"), res.join("c.txt")).unwrap();
    let text = std::fs::read_to_string(root.join("b/gt/gt.txt")).unwrap();
    let kept: String = text.lines().filter(|l| !l.starts_with("1,") && !l.starts_with("2,") && !l.starts_with("3,")).map(|l| format!("{l}\n")).collect();
    std::fs::write(res.join("b.txt"), kept).unwrap();
    let csv = tmp.path().join("r.csv");
    ok(&["eval", "--gt", s(&root), "--results", s(&res), "--csv", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "# seed=0");
    assert_eq!(rows[1], "sequence,MOTA,IDF1,MT,ML,FP,FN,ID Sw.");
    assert!(rows[2].starts_with("a,1.000000,1.000000"));
    assert!(rows[3].starts_with("b,0.500000,"), "{}", rows[3]);
    // 54 gt boxes, 9 missed
    assert!(rows[5].starts_with(&format!("ALL,{:.6},", 1.0 - 9.0 / 54.0)), "{}", rows[5]);
}

#[test]
fn track_with_filters_and_empty_detections() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("s");
    let ckpt = tmp.path().join("m.ckpt");
    simulate(&seq, "3");
    train_tiny(&seq, &ckpt);
    let log = std::fs::read_to_string(ckpt.with_extension("log")).unwrap();
    assert!(log.starts_with("# seed=0\nstep,total,cls,l1,giou\n1,"));
    assert_eq!(log.lines().count(), 5);

    let det = SeqDir::new(&seq).det_path();
    std::fs::write(&det, "").unwrap();
    let res = tmp.path().join("r.txt");
    for flags in [&["--filter", "iou"][..], &["--public-dets"][..], &["--filter", "cd"][..]] {
        let mut args = vec!["track", "--checkpoint", s(&ckpt), "--seq", s(&seq), "--out", s(&res)];
        args.extend_from_slice(flags);
        ok(&args);
        assert_eq!(std::fs::read_to_string(&res).unwrap(), "", "{flags:?}");
    }
    for flags in [&[][..], &["--no-track-queries"][..], &["--no-reid"][..]] {
        let mut args = vec!["track", "--checkpoint", s(&ckpt), "--seq", s(&seq), "--out", s(&res)];
        args.extend_from_slice(flags);
        ok(&args);
        read_mot(&res).unwrap();
    }
    fails(&["track", "--checkpoint", s(&ckpt), "--seq", s(&seq), "--out", s(&res), "--filter", "xyz"], "config");
}

#[test]
fn bad_checkpoints_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("s");
    let ckpt = tmp.path().join("m.ckpt");
    simulate(&seq, "3");
    train_tiny(&seq, &ckpt);
    let res = tmp.path().join("r.txt");

    let bytes = std::fs::read(&ckpt).unwrap();
    let bad = tmp.path().join("bad.ckpt");
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    fails(&["track", "--checkpoint", s(&bad), "--seq", s(&seq), "--out", s(&res)], "checkpoint");
    fails(&["track", "--checkpoint", s(&tmp.path().join("none")), "--seq", s(&seq), "--out", s(&res)], "io");
    // resuming under a different architecture
    fails(
        &["train", "--data", s(&seq), "--out", s(&ckpt), "--resume", s(&ckpt), "--set", "model.d_model=16"],
        "checkpoint",
    );
}

#[test]
fn resume_continues_the_step_count() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("s");
    let ckpt = tmp.path().join("m.ckpt");
    simulate(&seq, "3");
    train_tiny(&seq, &ckpt);
    let out = ok(&["train", "--data", s(&seq), "--out", s(&ckpt), "--resume", s(&ckpt), "--set", "train.steps=5"]);
    assert!(out.contains("step 5 "), "{out}");
    let log = std::fs::read_to_string(ckpt.with_extension("log")).unwrap();
    let steps: Vec<&str> = log.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["1", "2", "3", "4", "5"]);
}

#[test]
fn divergence_aborts_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("s");
    simulate(&seq, "3");
    let ckpt = tmp.path().join("m.ckpt");
    let err = fails(
        &["train", "--data", s(&seq), "--out", s(&ckpt), "--set", "train.steps=20", "--set", "optim.lr=1e300", "--set", "optim.clip_norm=0"],
        "divergence",
    );
    assert!(err.contains("non-finite"), "{err}");
    assert!(!ckpt.exists());
}
