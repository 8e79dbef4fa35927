#[path = "../../core/tests/support/mod.rs"]
mod support;

use egonce_core::evalkit::{GroundTruthSegment, TemporalPrediction};
use serde_json::Value;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use support::brute_force_map;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn egonce(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egonce"))
        .arg("--out-dir")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn tag_writes_one_line_per_narration_and_is_repeatable() {
    let dir = TempDir::new().unwrap();
    let (narrations, taxonomy) = (fixture("narrations.jsonl"), fixture("taxonomy.json"));
    let args = ["tag", "--narrations", p(&narrations), "--taxonomy", p(&taxonomy)];
    let o = egonce(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = fs::read(dir.path().join("tagged.jsonl")).unwrap();
    let input = fs::read_to_string(fixture("narrations.jsonl")).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), input.lines().count());
    assert_eq!(code(&egonce(dir.path(), &args)), 0);
    assert_eq!(fs::read(dir.path().join("tagged.jsonl")).unwrap(), first);
}

#[test]
fn tag_prints_empty_tag_counts() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_egonce"))
        .args(["--out-dir", p(dir.path()), "tag", "--narrations"])
        .arg(fixture("narrations.jsonl"))
        .arg("--taxonomy")
        .arg(fixture("taxonomy.json"))
        .output()
        .unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("1 without a noun, 1 without a verb"), "{stdout}");
}

#[test]
fn missing_taxonomy_exits_2_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no_such_taxonomy.json");
    let o = egonce(dir.path(), &["tag", "--narrations", p(&fixture("narrations.jsonl")), "--taxonomy", p(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_such_taxonomy.json"), "{}", stderr(&o));
}

#[test]
fn malformed_narrations_exit_2_with_line() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"video_id\": \"v\", \"timestamp_sec\": 1.0, \"text\": \"x\"}\n{\"video_id\": \"v\"}\n").unwrap();
    let o = egonce(dir.path(), &["tag", "--narrations", p(&bad), "--taxonomy", p(&fixture("taxonomy.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.jsonl") && stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn pair_numbers_clips_per_video_and_contains_timestamps() {
    let dir = TempDir::new().unwrap();
    let tag = egonce(dir.path(), &["tag", "--narrations", p(&fixture("narrations.jsonl")), "--taxonomy", p(&fixture("taxonomy.json"))]);
    assert_eq!(code(&tag), 0);
    let tagged = dir.path().join("tagged.jsonl");
    let o = egonce(dir.path(), &["pair", "--tagged", p(&tagged), "--window-sec", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("pairs.jsonl")).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ids: Vec<&str> = rows.iter().map(|r| r["pair_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["kitchen#0", "kitchen#1", "kitchen#2", "garage#0", "garage#1"]);
    for r in &rows {
        let (s, e, t) = (r["start_sec"].as_f64().unwrap(), r["end_sec"].as_f64().unwrap(), r["timestamp_sec"].as_f64().unwrap());
        assert!(s <= t && t <= e && s >= 0.0);
    }
    // kitchen#1 at 12.5 s gets the full window
    assert_eq!((rows[1]["start_sec"].as_f64(), rows[1]["end_sec"].as_f64()), (Some(10.5), Some(14.5)));
}

#[test]
fn pair_respects_listed_durations() {
    let dir = TempDir::new().unwrap();
    egonce(dir.path(), &["tag", "--narrations", p(&fixture("narrations.jsonl")), "--taxonomy", p(&fixture("taxonomy.json"))]);
    let durations = dir.path().join("durations.json");
    fs::write(&durations, r#"{"garage": 4.5}"#).unwrap();
    let o = egonce(dir.path(), &["pair", "--tagged", p(&dir.path().join("tagged.jsonl")), "--durations", p(&durations)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let last: Value = serde_json::from_str(fs::read_to_string(dir.path().join("pairs.jsonl")).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["end_sec"].as_f64(), Some(4.5));
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!("[train]\nembed_dim = 16\nbatch_size = 16\n[corpus]\nnum_videos = 6\nclips_per_video = 12\n{extra}"),
    )
    .unwrap();
    path
}

fn checkpoint_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn zero_epochs_emits_only_the_initialisation_checkpoint() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = egonce(dir.path(), &["--config", p(&cfg), "train", "--epochs", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(checkpoint_names(dir.path()), ["epoch_000.text.egoc", "epoch_000.video.egoc"]);
    let summary = read_json(&dir.path().join("train_summary.json"));
    assert_eq!(summary["best_epoch"], 0);
    assert_eq!(summary["steps"], 0);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = small_config(a.path(), "");
    for d in [&a, &b] {
        let o = egonce(d.path(), &["--config", p(&cfg), "--seed", "11", "train", "--epochs", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for name in ["metrics.jsonl", "train_summary.json", "resolved_config.toml"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let names = checkpoint_names(a.path());
    assert_eq!(names.len(), 6);
    for n in &names {
        let rel = Path::new("checkpoints").join(n);
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap());
    }
    let c = TempDir::new().unwrap();
    egonce(c.path(), &["--config", p(&cfg), "--seed", "12", "train", "--epochs", "2"]);
    assert_ne!(fs::read(a.path().join("metrics.jsonl")).unwrap(), fs::read(c.path().join("metrics.jsonl")).unwrap());
}

#[test]
fn resolved_config_records_the_seed_everywhere() {
    let dir = TempDir::new().unwrap();
    let o = egonce(dir.path(), &["--config", p(&small_config(dir.path(), "")), "--seed", "5", "train", "--epochs", "0", "--lr", "0.01"]);
    assert_eq!(code(&o), 0);
    let cfg: toml::Table = toml::from_str(&fs::read_to_string(dir.path().join("resolved_config.toml")).unwrap()).unwrap();
    assert_eq!(cfg["seed"].as_integer(), Some(5));
    assert_eq!(cfg["train"]["seed"].as_integer(), Some(5));
    assert_eq!(cfg["corpus"]["seed"].as_integer(), Some(5));
    assert_eq!(cfg["train"]["optimizer"]["lr"].as_float(), Some(0.01));
}

fn step_losses(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["event"] == "step")
        .map(|v| v["loss"].as_f64().unwrap())
        .collect()
}

#[test]
fn objectives_agree_on_a_unique_tag_corpus() {
    let root = TempDir::new().unwrap();
    let cfg = small_config(root.path(), "unique_tags = true\nclip_spacing_sec = 61.0\n");
    let mut curves = Vec::new();
    for objective in ["egonce", "infonce"] {
        let out = root.path().join(objective);
        let o = egonce(&out, &["--config", p(&cfg), "train", "--epochs", "3", "--lr", "0.001", "--objective", objective]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        curves.push(step_losses(&out));
    }
    assert!(!curves[0].is_empty());
    assert_eq!(curves[0].len(), curves[1].len());
    for (a, b) in curves[0].iter().zip(&curves[1]) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn train_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&egonce(dir.path(), &["train", "--epochs", "0", "--tau=-1"])), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nwarmup_steps = 10\n").unwrap();
    let o = egonce(dir.path(), &["--config", p(&bad), "train"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.toml"), "{}", stderr(&o));
    fs::write(&bad, "[corpus]\nseed = 4\n").unwrap();
    assert_eq!(code(&egonce(dir.path(), &["--config", p(&bad), "train"])), 2);
    let o = egonce(dir.path(), &["train", "--pairs", p(&fixture("loc_gt.jsonl"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diverging_training_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = egonce(dir.path(), &["--config", p(&cfg), "train", "--epochs", "5", "--lr", "1e308"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn exported_corpus_trains_from_feature_files() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let a = dir.path().join("a");
    assert_eq!(code(&egonce(&a, &["--config", p(&cfg), "train", "--epochs", "1", "--export-corpus"])), 0);
    let corpus = a.join("corpus");
    let b = dir.path().join("b");
    let o = egonce(
        &b,
        &[
            "--config", p(&cfg), "train", "--epochs", "1",
            "--pairs", p(&corpus.join("pairs.jsonl")),
            "--video-features", p(&corpus.join("video.egof")),
            "--text-features", p(&corpus.join("text.egof")),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = read_json(&b.join("train_summary.json"));
    assert_eq!(summary["input"]["pairs"]["sha256"].as_str().unwrap().len(), 64);
    // features are stored as f32, so losses agree only approximately
    for (x, y) in step_losses(&a).iter().zip(step_losses(&b)) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

fn load_loc(pred: &str) -> (Vec<TemporalPrediction>, Vec<GroundTruthSegment>) {
    let preds = TemporalPrediction::read_lines(BufReader::new(fs::File::open(fixture(pred)).unwrap())).unwrap();
    let gts = GroundTruthSegment::read_lines(BufReader::new(fs::File::open(fixture("loc_gt.jsonl")).unwrap())).unwrap();
    (preds, gts)
}

fn eval_loc(dir: &Path, pred: &str) -> (i32, Value) {
    let o = egonce(dir, &["eval-loc", "--predictions", p(&fixture(pred)), "--ground-truth", p(&fixture("loc_gt.jsonl"))]);
    let report = if code(&o) == 0 { read_json(&dir.join("eval_loc.json")) } else { Value::Null };
    (code(&o), report)
}

fn recalls(report: &Value) -> Vec<f64> {
    report["recall"]
        .as_object()
        .unwrap()
        .values()
        .flat_map(|row| row.as_object().unwrap().values().map(|v| v.as_f64().unwrap()))
        .collect()
}

#[test]
fn perfect_predictions_score_one() {
    let dir = TempDir::new().unwrap();
    let (c, r) = eval_loc(dir.path(), "loc_perfect.jsonl");
    assert_eq!(c, 0);
    assert!(recalls(&r).iter().all(|&x| x == 1.0));
    assert_eq!(r["map"]["average"].as_f64(), Some(1.0));
    assert_eq!(r["input"]["predictions"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn empty_predictions_score_zero() {
    let dir = TempDir::new().unwrap();
    let (c, r) = eval_loc(dir.path(), "loc_empty.jsonl");
    assert_eq!(c, 0);
    assert!(recalls(&r).iter().all(|&x| x == 0.0));
    assert_eq!(r["map"]["average"].as_f64(), Some(0.0));
}

#[test]
fn hand_case_report_matches_the_oracle() {
    let dir = TempDir::new().unwrap();
    let (c, r) = eval_loc(dir.path(), "loc_hand.jsonl");
    assert_eq!(c, 0);
    let (preds, gts) = load_loc("loc_hand.jsonl");
    let per: Vec<f64> = [0.1, 0.3, 0.5].iter().map(|&t| brute_force_map(&preds, &gts, t)).collect();
    for (t, want) in ["0.1", "0.3", "0.5"].iter().zip(&per) {
        assert!((r["map"]["per_threshold"][t].as_f64().unwrap() - want).abs() < 1e-9);
    }
    assert!((r["map"]["average"].as_f64().unwrap() - 11.0 / 12.0).abs() < 1e-9);
}

#[test]
fn unlabelled_ground_truth_skips_map() {
    let dir = TempDir::new().unwrap();
    let gt = dir.path().join("gt.jsonl");
    fs::write(&gt, "{\"query_id\": \"q0\", \"span\": [0.0, 10.0]}\n").unwrap();
    let o = egonce(dir.path(), &["eval-loc", "--predictions", p(&fixture("loc_perfect.jsonl")), "--ground-truth", p(&gt), "--ks", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&dir.path().join("eval_loc.json"));
    assert!(r["map"].is_null());
    assert_eq!(r["recall"]["0.3"]["R@1"].as_f64(), Some(1.0));
}

#[test]
fn eval_errors_use_the_exit_contract() {
    let dir = TempDir::new().unwrap();
    assert_eq!(eval_loc(dir.path(), "loc_bad.jsonl").0, 2);
    let o = egonce(dir.path(), &["eval-loc", "--predictions", p(&fixture("loc_hand.jsonl")), "--ground-truth", p(&fixture("empty.jsonl"))]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = egonce(dir.path(), &["eval-mcq", "--questions", p(&fixture("empty.jsonl"))]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("undefined metric"), "{}", stderr(&o));
    let o = egonce(dir.path(), &["eval-cls", "--task", "pnr", "--predictions", p(&fixture("empty.jsonl")), "--ground-truth", p(&fixture("empty.jsonl"))]);
    assert_eq!(code(&o), 4);
    let o = egonce(dir.path(), &["eval-cls", "--task", "pnr", "--fps", "0", "--predictions", p(&fixture("pnr_pred.jsonl")), "--ground-truth", p(&fixture("pnr_gt.jsonl"))]);
    assert_eq!(code(&o), 2);
    let o = egonce(dir.path(), &["eval-cls", "--task", "oscc", "--predictions", p(&fixture("pnr_pred.jsonl")), "--ground-truth", p(&fixture("oscc_gt.jsonl"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn mcq_report_splits_by_kind() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&egonce(dir.path(), &["eval-mcq", "--questions", p(&fixture("mcq.jsonl"))])), 0);
    let r = read_json(&dir.path().join("eval_mcq.json"));
    assert_eq!(r["inter_video"].as_f64(), Some(1.0));
    assert_eq!(r["intra_video"].as_f64(), Some(0.5));
    assert_eq!(r["intra_video_questions"], 2);
}

#[test]
fn classification_reports() {
    let dir = TempDir::new().unwrap();
    let o = egonce(dir.path(), &["eval-cls", "--task", "oscc", "--predictions", p(&fixture("oscc_pred.jsonl")), "--ground-truth", p(&fixture("oscc_gt.jsonl"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&dir.path().join("eval_oscc.json"))["accuracy"].as_f64(), Some(0.75));
    let o = egonce(dir.path(), &["eval-cls", "--task", "pnr", "--predictions", p(&fixture("pnr_pred.jsonl")), "--ground-truth", p(&fixture("pnr_gt.jsonl"))]);
    assert_eq!(code(&o), 0);
    let r = read_json(&dir.path().join("eval_pnr.json"));
    // errors are 30 / 30 = 1.0 s and 0.0 s
    assert_eq!(r["mean"].as_f64(), Some(0.5));
    assert_eq!(r["median"].as_f64(), Some(0.5));
}

#[test]
fn gradcheck_passes_by_default() {
    let dir = TempDir::new().unwrap();
    let o = egonce(dir.path(), &["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&dir.path().join("gradcheck.json"));
    assert_eq!(r["passed"], true);
    assert_eq!(r["suites"].as_array().unwrap().len(), 5);
    assert!(r["max_relative_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn injected_gradient_bug_exits_5_with_worst_entry() {
    let dir = TempDir::new().unwrap();
    let o = egonce(dir.path(), &["gradcheck", "--trials", "2", "--inject-bug"]);
    assert_eq!(code(&o), 5);
    let err = stderr(&o);
    assert!(err.contains("suite") && err.contains("entry 0"), "{err}");
    assert_eq!(read_json(&dir.path().join("gradcheck.json"))["passed"], false);
}

#[test]
fn gradcheck_is_reproducible_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let mut worst = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&egonce(dir.path(), &["--seed", "42", "gradcheck", "--trials", "1"])), 0);
        worst.push(read_json(&dir.path().join("gradcheck.json"))["max_relative_error"].clone());
    }
    assert_eq!(worst[0], worst[1]);
    assert!(worst[0].as_f64().is_some());
}

#[test]
fn report_merges_inputs_with_checksums() {
    let dir = TempDir::new().unwrap();
    egonce(dir.path(), &["eval-mcq", "--questions", p(&fixture("mcq.jsonl"))]);
    let mcq = dir.path().join("eval_mcq.json");
    let o = egonce(dir.path(), &["report", p(&mcq)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["reports"]["eval_mcq"]["inter_video"].as_f64(), Some(1.0));
    assert_eq!(r["input"][0]["sha256"].as_str().unwrap().len(), 64);
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "not json").unwrap();
    assert_eq!(code(&egonce(dir.path(), &["report", p(&junk)])), 2);
}
