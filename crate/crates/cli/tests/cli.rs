use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lerg_cli::report::parse_matrix_csv;

fn lerg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lerg"))
        .args(args)
        .env("LERG_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lerg(args);
    assert!(
        out.status.success(),
        "lerg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

const CORPUS: &str = r#"{"id": "greet", "context": "hello how are you doing today", "response": "i am fine thanks"}
{"id": "weather", "context": "what is the weather like outside", "response": "it is sunny and warm"}
{"id": "music", "context": "do you like to listen to music", "response": "yes i like jazz"}
{"id": "food", "context": "what did you have for dinner", "response": "i had pasta"}
"#;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn additive_explanation_csv_equals_weights() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.jsonl", "{\"id\": \"t\", \"context\": \"a b c d\", \"response\": \"x y\"}\n");
    let weights = [[-0.5, 0.25], [0.125, -1.0], [0.0, -0.3], [-0.7, 0.1]];
    let spec = serde_json::json!({
        "context": ["a", "b", "c", "d"],
        "base": [-1.0, -0.5],
        "weights": weights,
    });
    let model = write(dir.path(), "toy.json", &spec.to_string());
    let out = dir.path().join("out");
    ok(&[
        "explain", "--model", "additive", "--model-path", p(&model), "--input", p(&corpus), "--out", p(&out),
        "--method", "lerg-s", "--method", "exact-lerg-s", "--samples", "300",
    ]);
    for method in ["lerg-s", "exact-lerg-s"] {
        let text = std::fs::read_to_string(out.join(format!("t.{method}.csv"))).unwrap();
        let rows = parse_matrix_csv(&text).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, w) in rows.iter().zip(&weights) {
            for (v, w) in row.iter().zip(w) {
                assert!((v - w).abs() <= 1e-9, "{method}: {v} vs {w}");
            }
        }
        assert!(out.join(format!("t.{method}.svg")).exists());
        assert!(out.join(format!("t.{method}.json")).exists());
    }
}

#[test]
fn explain_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.jsonl", CORPUS);
    let out = dir.path().join("out");
    let args = [
        "explain", "--model", "ngram", "--input", p(&corpus), "--out", p(&out), "--method", "lerg-s", "--method",
        "shapley-w", "--method", "lime", "--samples", "150", "--seed", "9",
    ];
    ok(&args);
    let first = snapshot(&out);
    assert_eq!(first.len(), 1 + 4 * 3 * 3);
    ok(&args);
    assert_eq!(snapshot(&out), first);
}

#[test]
fn eval_rerun_from_embedded_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.jsonl", CORPUS);
    let out = dir.path().join("out");
    ok(&[
        "eval", "--model", "ngram", "--input", p(&corpus), "--out", p(&out), "--method", "lerg-s", "--samples", "150",
        "--trials", "4", "--seed", "3",
    ]);
    let first = snapshot(&out);
    let report: serde_json::Value = serde_json::from_slice(&first["report.json"]).unwrap();
    let saved = write(dir.path(), "saved.json", &report["config"].to_string());
    std::fs::remove_dir_all(&out).unwrap();
    ok(&["eval", "--config", p(&saved)]);
    assert_eq!(snapshot(&out), first);
}

#[test]
fn eval_writes_two_curves_per_metric_and_ppl_a_at_one_is_full_perplexity() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.jsonl", CORPUS);
    let out = dir.path().join("out");
    ok(&[
        "eval", "--model", "ngram", "--input", p(&corpus), "--out", p(&out), "--method", "lerg-s", "--samples", "150",
        "--trials", "3", "--ratios", "0.2,0.5,1.0",
    ]);
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(agg.as_bytes());
    let mut curves = std::collections::BTreeSet::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        curves.insert((rec[0].to_string(), rec[1].to_string()));
    }
    let expected: std::collections::BTreeSet<_> = [("lerg-s", "ppl_a"), ("lerg-s", "pplc_r"), ("random", "ppl_a"), ("random", "pplc_r")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(curves, expected);

    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(eval.as_bytes());
    let mut full = BTreeMap::new();
    let mut at_one = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        let v: f64 = rec[4].parse().unwrap();
        match (&rec[1], &rec[2], &rec[3]) {
            ("full-input", "ppl", _) => {
                full.insert(rec[0].to_string(), v);
            }
            ("lerg-s", "ppl_a", "1") => {
                at_one.insert(rec[0].to_string(), v);
            }
            _ => {}
        }
    }
    assert_eq!(full.len(), 4);
    for (id, v) in &full {
        assert!((at_one[id] - v).abs() <= 1e-12, "{id}: {} vs {v}", at_one[id]);
    }
    for svg in ["pplc_r.svg", "ppl_a.svg"] {
        let text = std::fs::read_to_string(out.join(svg)).unwrap();
        assert!(text.contains("<metadata>") && text.contains("<polyline"));
    }
}

#[test]
fn exact_estimator_cap_is_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let words = |n: usize| (0..n).map(|k| format!("w{k}")).collect::<Vec<_>>().join(" ");
    let corpus = write(
        dir.path(),
        "c.jsonl",
        &format!(
            "{{\"id\": \"m12\", \"context\": \"{}\", \"response\": \"r1 r2\"}}\n{{\"id\": \"m25\", \"context\": \"{}\", \"response\": \"r1 r2\"}}\n",
            words(12),
            words(25)
        ),
    );
    let out = dir.path().join("out");
    let base = ["explain", "--model", "ngram", "--input", p(&corpus), "--out", p(&out), "--method", "exact-lerg-s"];
    let mut a = base.to_vec();
    a.extend(["--id", "m12"]);
    ok(&a);
    assert!(out.join("m12.exact-lerg-s.csv").exists());
    let mut a = base.to_vec();
    a.extend(["--id", "m25"]);
    let res = lerg(&a);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["code"], "too_large");
}

#[test]
fn strict_and_lenient_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\nnot json at all\n", CORPUS.trim_end());
    let corpus = write(dir.path(), "c.jsonl", &text);
    let out = dir.path().join("out");
    let args = ["eval", "--model", "ngram", "--input", p(&corpus), "--out", p(&out), "--samples", "100", "--trials", "2"];
    let res = lerg(&args);
    assert_eq!(res.status.code(), Some(1));
    let err = error_json(&res);
    assert_eq!(err["error"]["code"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 5"));

    let mut lenient = args.to_vec();
    lenient.push("--lenient");
    ok(&lenient);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["skipped_lines"][0]["line"], 5);
    assert_eq!(report["report"]["examples"].as_array().unwrap().len(), 4);
}

#[test]
fn unreachable_model_server_is_exit_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.jsonl", CORPUS);
    let out = dir.path().join("out");
    let res = lerg(&[
        "explain", "--model", "remote", "--server-cmd", "exit 1", "--input", p(&corpus), "--out", p(&out),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(error_json(&res)["error"]["code"].is_string());
}

#[test]
fn usage_errors_are_validation_errors() {
    let res = lerg(&["explain", "--model", "ngram", "--input", "x.jsonl", "--out", "o", "--method", "nope"]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(error_json(&res)["error"]["code"], "validation");
    let res = lerg(&["eval", "--model", "ngram", "--input", "x.jsonl", "--out", "o", "--ratios", "0.5,0.2"]);
    assert_eq!(res.status.code(), Some(1));
    let res = lerg(&["explain", "--model", "ngram", "--input", "/nonexistent/c.jsonl", "--out", "o"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["code"], "io");
}

#[test]
fn oracle_check_reports_json_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["oracle-check", "--quick", "--seed", "4", "--out", p(dir.path())]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"].as_str().unwrap().contains("efficiency")));
    assert_eq!(report["passed"], true, "{report:#}");
    let saved = std::fs::read(dir.path().join("oracle_report.json")).unwrap();
    assert_eq!(saved, out.stdout);
}

#[test]
fn trained_ngram_model_file_matches_on_the_fly_training() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.jsonl", CORPUS);
    let model = dir.path().join("model.json");
    ok(&["train-ngram", "--input", p(&corpus), "--out", p(&model)]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let common = ["--input", p(&corpus), "--method", "exact-lerg-s", "--id", "food"];
    let mut x = vec!["explain", "--model", "ngram", "--out", p(&a)];
    x.extend(common);
    ok(&x);
    let mut y = vec!["explain", "--model", "ngram", "--model-path", p(&model), "--out", p(&b)];
    y.extend(common);
    ok(&y);
    let pa = parse_matrix_csv(&std::fs::read_to_string(a.join("food.exact-lerg-s.csv")).unwrap()).unwrap();
    let pb = parse_matrix_csv(&std::fs::read_to_string(b.join("food.exact-lerg-s.csv")).unwrap()).unwrap();
    assert_eq!(pa, pb);
}
