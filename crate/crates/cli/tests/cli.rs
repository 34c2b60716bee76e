use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SUBCOMMANDS: [&str; 10] = [
    "synth", "train", "predict", "eval", "bench", "alpha", "aggregate", "round", "serve", "gradcheck",
];

fn highlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_highlight"))
        .args(args)
        .env_remove("HF_STORE")
        .env("COLUMNS", "100")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = highlight(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Top-level and per-subcommand help, compared with a checked-in file.
/// Set `UPDATE_GOLDEN=1` to rewrite it.
#[test]
fn help_matches_golden() {
    let mut text = ok(&["--help"]);
    for sub in SUBCOMMANDS {
        text.push_str(&format!("\n===== {sub} =====\n"));
        text.push_str(&ok(&[sub, "--help"]));
    }
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/help.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &text).unwrap();
    }
    let want = fs::read_to_string(&golden).expect("golden help file");
    assert_eq!(text, want, "help text changed; rerun with UPDATE_GOLDEN=1 if intended");
    // every documented flag shows its default
    for flag in ["--stride <STRIDE>", "[default: 5]", "[default: 0.5]", "[default: available cores, at most 8]"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn exit_codes() {
    let out = highlight(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frobnicate") && err.contains("Usage"), "{err}");

    assert_eq!(highlight(&["synth"]).status.code(), Some(1));
    assert_eq!(highlight(&["synth", "--out", "x", "--style", "chess"]).status.code(), Some(1));
    assert_eq!(highlight(&["predict", "--model-dir", "m", "--video", "v", "--out", "o", "--stride", "0"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = highlight(&["train", "--corpus", p(&missing), "--out", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("corpus.json"), "{err}");

    assert_eq!(highlight(&["--version"]).status.code(), Some(0));
}

#[test]
fn workflow_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let models = dir.path().join("models");
    ok(&[
        "synth", "--out", p(&corpus), "--videos", "3", "--seed", "4", "--width", "24", "--height", "24",
        "--min-frames", "900", "--max-frames", "900", "--style", "lol",
    ]);
    let index: Value = serde_json::from_str(&fs::read_to_string(corpus.join("corpus.json")).unwrap()).unwrap();
    let test_video = index["split"]["test"][0].as_str().unwrap().to_string();

    ok(&[
        "train", "--corpus", p(&corpus), "--out", p(&models), "--epochs", "1", "--input-size", "16",
        "--train-stride", "20",
    ]);
    for f in ["scene.nnm", "cascade_binary.nnm", "cascade_regression.nnm", "single_binary.nnm", "single_multiclass.nnm"] {
        assert!(models.join(f).exists(), "{f}");
    }

    // defaults are recorded in the output header
    let pred = dir.path().join("pred");
    let summary = ok(&[
        "predict", "--model-dir", p(&models), "--video", p(&corpus.join(&test_video)), "--out", p(&pred),
    ]);
    assert!(summary.contains("classified"));
    let tl: Value = serde_json::from_str(&fs::read_to_string(pred.join("timeline.json")).unwrap()).unwrap();
    assert_eq!(tl["stride"], 5);
    assert_eq!(tl["threshold"], 0.5);
    assert_eq!(tl["scene"].as_array().unwrap().len(), 900);
    assert!(fs::read_to_string(pred.join("segments.csv")).unwrap().starts_with("start_frame,end_frame"));
    let tp: Value = serde_json::from_str(&fs::read_to_string(pred.join("throughput.json")).unwrap()).unwrap();
    assert_eq!(tp["frames_classified"], 181);

    let ev = dir.path().join("eval");
    let table = ok(&[
        "eval", "--model", "cascade-binary", "--model-dir", p(&models), "--corpus", p(&corpus), "--out", p(&ev),
        "--split", "all",
    ]);
    assert!(table.contains("cascade-binary"));
    let report = fs::read_to_string(ev.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(report.lines().nth(1).unwrap().starts_with("cascade-binary,"));

    let bundle = corpus.join(&test_video);
    let labels = bundle.join("highlight_levels.csv");
    let scenes = bundle.join("scene_labels.csv");
    let a = dir.path().join("alpha");
    let text = ok(&[
        "alpha", "--labels", p(&labels), "--video-id", &test_video, "--scene-labels", p(&scenes), "--out", p(&a),
    ]);
    assert!(text.contains("best 3"));
    let doc: Value = serde_json::from_str(&fs::read_to_string(a.join("alpha.json")).unwrap()).unwrap();
    assert_eq!(doc["best_subset"].as_array().unwrap().len(), 3);

    let agg = dir.path().join("agg");
    ok(&["aggregate", "--labels", p(&labels), "--scene-labels", p(&scenes), "--out", p(&agg)]);
    let csv = fs::read_to_string(agg.join("consensus.csv")).unwrap();
    assert_eq!(csv.lines().count(), 901);
    assert_eq!(csv.lines().next(), Some("frame_index,score,label"));

    let grad = ok(&["gradcheck", "--trials", "2"]);
    assert!(grad.contains("tinynet"), "{grad}");
}

#[test]
fn rounds_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    ok(&[
        "synth", "--out", p(&store), "--videos", "3", "--seed", "2", "--width", "24", "--height", "24",
        "--min-frames", "300", "--max-frames", "300",
    ]);
    let round = |extra: &[&str]| {
        let mut args = vec!["round", "--store", p(&store), "--round-input-size", "16", "--round-epochs", "1"];
        args.extend_from_slice(extra);
        highlight(&args)
    };
    // the first batch is not corrected yet
    let out = round(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("without corrections"));

    let out = round(&["--simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("round 1 done"), "{text}");
    assert!(store.join("service/mitl/models/scene_round_1.nnm").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_highlight"))
        .args(["round", "--simulate", "--round-input-size", "16", "--round-epochs", "1"])
        .env("HF_STORE", &store)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("round 2 done"));
}
