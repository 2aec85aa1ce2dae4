use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TEMPLATE: &str = r#"{
  "targets": [{"func": "avg", "attr": "amount"}, {"func": "sum", "attr": "quantity"}],
  "cont_filter_attrs": ["quantity"],
  "nom_filter_attrs": ["region", "channel"],
  "n_cont_samples": 12,
  "seed": 1
}"#;

fn aqp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqp"))
        .current_dir(dir)
        .args(["--out-dir", "out", "--seed", "7", "--threads", "2"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = aqp(dir, args);
    assert!(
        out.status.success(),
        "aqp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not JSON: {stderr}"))
}

const DATA: [&str; 4] = ["--data", "out/data.csv", "--schema", "out/schema.json"];

fn with_data<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(&DATA);
    v.extend_from_slice(extra);
    v
}

/// Runs every stage up to and including training in a fresh directory.
fn pipeline() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("template.json"), TEMPLATE).unwrap();
    ok(d, &["synth", "--rows", "3000"]);
    ok(d, &with_data("profile", &[]));
    ok(d, &with_data("generate", &["--template", "template.json", "--sql"]));
    ok(d, &with_data("label", &[]));
    ok(d, &["encode"]);
    ok(d, &["train", "--max-epochs", "2", "--lstm-units", "8", "--dense-units", "8", "--batch-size", "32"]);
    dir
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = pipeline();
    let d = dir.path();
    let eval = ok(d, &with_data("eval", &["--reps", "5", "--warmup", "1"]));
    assert!(eval.contains("avg(amount)") && eval.contains("sum(quantity)"), "{eval}");
    ok(d, &["bench", "--batch-sizes", "1,32", "--reps", "5"]);

    let out = d.join("out");
    for f in [
        "data.csv",
        "schema.json",
        "profile.json",
        "template.json",
        "workload.jsonl",
        "workload.sql",
        "labeled.jsonl",
        "vocab.json",
        "splits/avg_amount.train.jsonl",
        "splits/sum_quantity.test.jsonl",
        "models/avg_amount.ckpt",
        "models/sum_quantity.ckpt",
        "train_report.json",
        "eval_report.json",
        "eval_table.txt",
        "bench_report.json",
        "bench_table.txt",
        "generate.manifest.json",
        "label.manifest.json",
        "encode.manifest.json",
        "train.manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let reports: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert!(r["nrmse_percent"].as_f64().unwrap().is_finite());
        assert!(r["qt_qps"].as_f64().unwrap() > 0.0);
        assert!(r["mean_entropy"].as_f64().unwrap() > 0.0);
    }

    let workload = std::fs::read_to_string(out.join("workload.jsonl")).unwrap();
    let sql = std::fs::read_to_string(out.join("workload.sql")).unwrap();
    assert_eq!(workload.lines().count(), sql.lines().count());
    assert!(sql.lines().next().unwrap().starts_with("SELECT AVG(amount) FROM data WHERE"));

    let label: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("label.manifest.json")).unwrap()).unwrap();
    let info = &label["info"];
    assert_eq!(
        info["total"].as_u64().unwrap(),
        info["labeled"].as_u64().unwrap() + info["excluded_empty"].as_u64().unwrap()
    );
}

#[test]
fn predictions_follow_input_order_and_route_by_target() {
    let dir = pipeline();
    let d = dir.path();
    let workload = std::fs::read_to_string(d.join("out/workload.jsonl")).unwrap();
    let lines: Vec<&str> = workload.lines().collect();
    let half = lines.len() / 2;
    // Interleave the two targets so routing has to preserve positions.
    let mixed: Vec<&str> = (0..25).flat_map(|i| [lines[i], lines[half + i]]).collect();
    std::fs::write(d.join("mixed.jsonl"), mixed.join("\n") + "\n").unwrap();
    ok(d, &["predict", "--queries", "mixed.jsonl"]);

    let predictions = std::fs::read_to_string(d.join("out/predictions.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = predictions.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), mixed.len());
    for (row, input) in rows.iter().zip(&mixed) {
        let input: serde_json::Value = serde_json::from_str(input).unwrap();
        assert_eq!(row["target"], input["target"]);
        assert_eq!(row["filters"], input["filters"]);
        assert!(row["prediction"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = pipeline();
    let b = pipeline();
    for d in [a.path(), b.path()] {
        std::fs::copy(d.join("out/workload.jsonl"), d.join("q.jsonl")).unwrap();
        ok(d, &["predict", "--queries", "q.jsonl"]);
    }
    let (ra, rb) = (a.path().join("out"), b.path().join("out"));
    let listed = files(&ra);
    assert_eq!(listed, files(&rb));
    let mut compared = 0;
    for f in listed {
        // Training wall-clock time is the only nondeterministic field.
        if f == Path::new("train_report.json") {
            continue;
        }
        assert!(
            std::fs::read(ra.join(&f)).unwrap() == std::fs::read(rb.join(&f)).unwrap(),
            "{} differs between runs",
            f.display()
        );
        compared += 1;
    }
    assert!(compared >= 20);
}

#[test]
fn bad_input_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = aqp(d, &["generate", "--template", "nope.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error(&out)["error"], "validation");

    let out = aqp(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error(&out)["error"], "validation");

    ok(d, &["synth", "--rows", "200"]);
    std::fs::write(d.join("bad.json"), r#"{"targets": [{"func": "avg", "attr": "nonexistent"}]}"#).unwrap();
    let out = aqp(d, &with_data("generate", &["--template", "bad.json"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(error(&out)["message"].as_str().unwrap().contains("nonexistent"));
    assert!(!d.join("out/workload.jsonl").exists());

    let out = aqp(d, &["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error(&out)["message"].as_str().unwrap().contains("encode"));
}

#[test]
fn runtime_failure_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("out"), b"a file where the output directory should be").unwrap();
    let out = aqp(d, &["synth", "--rows", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["error"], "runtime");
}

#[test]
fn tampered_split_is_rejected() {
    let dir = pipeline();
    let d = dir.path();
    let split = d.join("out/splits/avg_amount.train.jsonl");
    let text = std::fs::read_to_string(&split).unwrap();
    let first = text.lines().next().unwrap().to_owned();
    std::fs::write(&split, text.replacen(&first, "", 1)).unwrap();
    let out = aqp(d, &["train", "--max-epochs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let message = error(&out)["message"].as_str().unwrap().to_owned();
    assert!(message.contains("avg_amount.train.jsonl") && message.contains("encode"), "{message}");

    let ckpt = d.join("out/models/sum_quantity.ckpt");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&ckpt, bytes).unwrap();
    let out = aqp(d, &["eval", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error(&out)["message"].as_str().unwrap().contains("sum_quantity.ckpt"));
}
