mod common;

use std::path::Path;
use std::process::{Command, Output};

use cmad::detector::AnomalyReport;
use cmad::eval::BenchmarkReport;
use cmad::data::Image;

use common::{first_png, fixture};

fn cmad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmad")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn score_writes_one_finite_record_per_image() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train.jsonl");
    let train_dir = f.dataset.join("train/good");
    assert_code(&cmad(&["score", "--model", s(&f.model), "--out", s(&out), s(&train_dir)]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let reports: Vec<AnomalyReport> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 8);
    assert!(reports.iter().all(|r| r.d.is_finite() && r.d_g.is_finite() && r.d_h.is_finite()));
    assert_eq!(reports[0].id, "000");

    // Same inputs give the same bytes.
    let again = dir.path().join("again.jsonl");
    assert_code(&cmad(&["score", "--model", s(&f.model), "--out", s(&again), s(&train_dir)]), 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn training_is_bitwise_reproducible() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.cmad");
    let args = ["train", "--dataset", s(&f.dataset), "--config", s(&f.config), "--out", s(&model)];
    assert_code(&cmad(&args), 0);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&f.model).unwrap());

    // A different seed flag overrides the file.
    let other = dir.path().join("other.cmad");
    let args = ["train", "--dataset", s(&f.dataset), "--config", s(&f.config), "--seed", "6", "--out", s(&other)];
    assert_code(&cmad(&args), 0);
    assert_ne!(std::fs::read(&other).unwrap(), std::fs::read(&f.model).unwrap());
}

#[test]
fn eval_writes_a_parseable_table() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_code(&cmad(&["eval", "--model", s(&f.model), "--dataset", s(&f.dataset), "--out", s(out)]), 0);
    }
    let report: BenchmarkReport = serde_json::from_str(&std::fs::read_to_string(a.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(report.records.len(), 9);
    for kind in ["missing", "extra_instance", "color_swap"] {
        assert!((0.0..=1.0).contains(&report.auroc_for(kind).unwrap()), "{kind}");
    }
    let table = std::fs::read_to_string(a.join("benchmark.txt")).unwrap();
    assert!(table.lines().last().unwrap().starts_with("overall"));
    assert_eq!(std::fs::read_to_string(a.join("records.jsonl")).unwrap().lines().count(), 9);
    for name in ["benchmark.txt", "benchmark.json", "records.jsonl"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn segment_overlay_matches_the_input_size() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let image = first_png(&f.dataset.join("test/good"));
    let overlay = dir.path().join("overlay.png");
    assert_code(&cmad(&["segment", "--model", s(&f.model), "--out", s(&overlay), s(&image)]), 0);
    let input = Image::load_png(&image).unwrap();
    let out = Image::load_png(&overlay).unwrap();
    assert_eq!((out.height(), out.width()), (input.height(), input.width()));
    let masks: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("overlay.component"))
        .collect();
    let model = cmad::model::ComponentModel::load(&f.model).unwrap();
    assert_eq!(masks.len(), model.kept().len());
    for k in model.kept() {
        let m = Image::load_png(dir.path().join(format!("overlay.component{k}.png"))).unwrap();
        assert_eq!((m.height(), m.width()), (input.height(), input.width()));
    }
}

#[test]
fn gen_writes_the_requested_split() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("gen.toml");
    std::fs::write(&spec, "seed = 2\n[split]\nn_train = 3\nn_test_good = 1\ndefects = [[\"missing\", 2]]\n").unwrap();
    let out = dir.path().join("set");
    assert_code(&cmad(&["gen", "--spec", s(&spec), "--out", s(&out)]), 0);
    let ds = cmad::eval::load_dataset(&out).unwrap();
    assert_eq!(ds.train.len(), 3);
    assert_eq!(ds.test.len(), 3);
    assert!(out.join("ground_truth/missing/001.png").is_file());
}

#[test]
fn exit_codes_separate_usage_data_and_success() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    assert_code(&cmad(&["--help"]), 0);
    assert_code(&cmad(&[]), 1);
    assert_code(&cmad(&["score", "--bogus"]), 1);
    assert_code(&cmad(&["train", "--dataset", s(&f.dataset), "--k", "1", "--out", s(&dir.path().join("m"))]), 1);

    let missing = dir.path().join("nope.cmad");
    let out = cmad(&["score", "--model", s(&missing), s(&f.dataset)]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.cmad"));

    let junk = dir.path().join("junk.cmad");
    std::fs::write(&junk, b"not a model").unwrap();
    assert_code(&cmad(&["eval", "--model", s(&junk), "--dataset", s(&f.dataset), "--out", s(dir.path())]), 2);

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_code(&cmad(&["train", "--dataset", s(&empty), "--out", s(&dir.path().join("m"))]), 2);

    let policy = dir.path().join("policy.toml");
    std::fs::write(&policy, "[policy]\nweights = { 0 = -1.0 }\n").unwrap();
    let image = first_png(&f.dataset.join("test/good"));
    assert_code(&cmad(&["score", "--model", s(&f.model), "--policy", s(&policy), s(&image)]), 1);
}
