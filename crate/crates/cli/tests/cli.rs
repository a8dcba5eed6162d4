use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selfage::corpus::{read_jsonl, write_posts, PostFormat};
use selfage::Post;

const BIN: &str = env!("CARGO_BIN_EXE_selfage");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn selfage")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const AGE_TEXTS: [&str; 6] = [
    "happy 21st birthday to me",
    "I turned 30 today and feel great",
    "I am 25 years old and still love cartoons",
    "celebrating my 18th birthday tonight",
    "just turned 40 lol",
    "I'm 19 and my back hurts",
];

const OTHER_TEXTS: [&str; 6] = [
    "my son is 12 today",
    "the bus was 20 minutes late",
    "my mom is 50 years old today",
    "watched 11 episodes in a row",
    "her dog turned 14 last week",
    "my brother is 17 and taller than me",
];

/// Posts plus a labels TSV built from the two text lists.
fn corpus(dir: &Path, copies: usize) -> (PathBuf, PathBuf) {
    let mut posts = Vec::new();
    let mut labels = String::from("post_id\tlabel\tage\n");
    for c in 0..copies {
        for (i, t) in AGE_TEXTS.iter().enumerate() {
            let id = format!("a{c}-{i}");
            let age: String = t.chars().filter(char::is_ascii_digit).collect();
            labels.push_str(&format!("{id}\tage\t{age}\n"));
            posts.push(Post::new(id, format!("u{i}"), chrono::DateTime::UNIX_EPOCH, *t));
        }
        for (i, t) in OTHER_TEXTS.iter().enumerate() {
            let id = format!("n{c}-{i}");
            labels.push_str(&format!("{id}\tno_age\t\n"));
            posts.push(Post::new(id, format!("v{i}"), chrono::DateTime::UNIX_EPOCH, *t));
        }
    }
    let posts_path = dir.join("posts.jsonl");
    write_posts(&posts_path, &posts, PostFormat::Jsonl).unwrap();
    let labels_path = dir.join("labels.tsv");
    std::fs::write(&labels_path, labels).unwrap();
    (posts_path, labels_path)
}

#[test]
fn seed_is_required_for_train_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let (posts, labels) = corpus(dir.path(), 1);
    let model = dir.path().join("m.json");
    let o = run(&["train", "-i", s(&posts), "--labels", s(&labels), "--model", s(&model)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"), "{}", stderr(&o));
    let o = run(&[
        "split", "-i", s(&posts), "--labels", s(&labels), "--train", "t", "--test", "u",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn train_classify_extract_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let (posts, labels) = corpus(dir.path(), 4);
    let model = dir.path().join("m.json");
    let o = run(&[
        "train", "-i", s(&posts), "--labels", s(&labels), "--model", s(&model), "--seed", "3", "--folds", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3-fold"));
    assert!(model.exists());

    let preds = dir.path().join("preds.jsonl");
    let o = run(&["classify", "-i", s(&posts), "--model", s(&model), "-o", s(&preds)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = read_jsonl(&preds).unwrap();
    assert_eq!(rows.len(), 48);

    let ext = dir.path().join("ext.jsonl");
    let o = run(&["extract", "-i", s(&posts), "-o", s(&ext)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let found: Vec<serde_json::Value> = read_jsonl(&ext).unwrap();
    let a0: Vec<&serde_json::Value> = found.iter().filter(|e| e["post_id"] == "a0-1").collect();
    assert_eq!(a0.len(), 1);
    assert_eq!(a0[0]["age"], 30);

    let report = dir.path().join("report.json");
    let o = run(&[
        "evaluate", "-i", s(&posts), "--labels", s(&labels), "--predictions", s(&preds),
        "--extractions", s(&ext), "--json", s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let counts = &json["classification"]["counts"];
    let total = ["tp", "fp", "fn", "tn"].iter().map(|k| counts[k].as_u64().unwrap()).sum::<u64>();
    assert_eq!(total, 48);
    assert!(json["joint_extraction"].is_object());
}

#[test]
fn classifier_flags_are_exclusive() {
    let o = run(&["classify", "-i", "x", "-o", "y", "--model", "m", "--plugin", "p"]);
    assert!(!o.status.success());
    let o = run(&["classify", "-i", "x", "-o", "y"]);
    assert!(!o.status.success());
}

#[test]
fn split_writes_both_halves() {
    let dir = tempfile::tempdir().unwrap();
    let (posts, labels) = corpus(dir.path(), 5);
    let (train, test) = (dir.path().join("train.tsv"), dir.path().join("test.tsv"));
    let o = run(&[
        "split", "-i", s(&posts), "--labels", s(&labels), "--seed", "1", "--train", s(&train), "--test", s(&test),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = |p: &Path| std::fs::read_to_string(p).unwrap().lines().count() - 1;
    assert_eq!((lines(&train), lines(&test)), (48, 12));
}

#[test]
fn retrieve_writes_hits() {
    let dir = tempfile::tempdir().unwrap();
    let (posts, _) = corpus(dir.path(), 1);
    let out = dir.path().join("hits.jsonl");
    let o = run(&["retrieve", "-i", s(&posts), "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let hits: Vec<serde_json::Value> = read_jsonl(&out).unwrap();
    assert!(hits.iter().any(|h| h["post_id"] == "a0-0"));
}

#[test]
fn kappa_prints_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.tsv");
    std::fs::write(&path, "item\tr1\tr2\nx\tA\tB\ny\tB\tA\n").unwrap();
    let o = run(&["kappa", s(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("kappa -1.0000"));
}

#[test]
fn run_pipeline_with_model() {
    let dir = tempfile::tempdir().unwrap();
    let (posts, labels) = corpus(dir.path(), 4);
    let model = dir.path().join("m.json");
    assert!(run(&["train", "-i", s(&posts), "--labels", s(&labels), "--model", s(&model), "--seed", "0"])
        .status
        .success());
    let out = dir.path().join("out");
    let o = run(&["run", "--input", s(&posts), "--model", s(&model), "--output-dir", s(&out), "--parallelism", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["counts"]["posts_scanned"], 48);
    for f in ["tweets.jsonl", "users.jsonl", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn errors_exit_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["extract", "-i", s(&dir.path().join("missing.jsonl")), "-o", "x"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: [extract]"), "{}", stderr(&o));
}
