//! Client side of the scoring wire protocol, against golden fixtures and a
//! stub server. Tests that need a server are skipped when `python3` is
//! missing.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};

use lerg_core::explain::{exact_lerg_s, fit_lerg_l, lerg_s, sampled_shapley};
use lerg_core::models::wire::{decode_handshake, decode_reply, encode_line, ScoreReply, ScoreRequest};
use lerg_core::models::{AdditiveToy, AdditiveToySpec, Generator, Manifest, ModelKind, RemoteClient, RemoteConfig};
use lerg_core::perturb::PerturbPlan;
use lerg_core::{Example, LergError, StepLogProbs};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str) -> String {
    let text = std::fs::read_to_string(fixture("golden").join(name)).unwrap();
    text.strip_suffix('\n').unwrap().to_string()
}

fn have_python() -> bool {
    let ok = Command::new("python3").arg("--version").output().map(|o| o.status.success()).unwrap_or(false);
    if !ok {
        eprintln!("python3 not found; skipping stub-server test");
    }
    ok
}

fn stub(args: &str) -> String {
    format!("exec python3 {} {args}", fixture("stub_server.py").display())
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// In-process twin of the stub's `wave` scorer.
struct Wave(Manifest);

impl Wave {
    fn new() -> Self {
        Wave(Manifest {
            kind: ModelKind::Table,
            normalized: true,
            vocabulary: "open".into(),
            max_batch: 8,
        })
    }
}

impl Generator for Wave {
    fn manifest(&self) -> &Manifest {
        &self.0
    }

    fn score(&self, context: &[String], response: &[String]) -> lerg_core::Result<StepLogProbs> {
        Ok(StepLogProbs(
            (0..response.len())
                .map(|j| {
                    let mut s = 0.0;
                    for c in context {
                        s += ((c.chars().count() * (j + 1)) % 7) as f64;
                    }
                    -(2.0 + s).ln()
                })
                .collect(),
        ))
    }
}

fn sample_example() -> Example {
    Example::parse("w", "the weather is awful so stay inside today", "grab a coat then").unwrap()
}

#[test]
fn golden_request_is_byte_exact() {
    let req = ScoreRequest {
        id: "abc".into(),
        contexts: vec![strings(&["hello", "there"]), vec![], strings(&["café", "你好"])],
        response: strings(&["hi", "friend"]),
    };
    assert_eq!(encode_line(&req).unwrap(), golden("request.jsonl"));
}

#[test]
fn golden_handshake_matches_client_schema() {
    let line = golden("handshake.jsonl");
    let hs = decode_handshake(&line).unwrap();
    assert!(hs.normalized);
    assert_eq!(hs.max_batch, 8);
    assert_eq!(encode_line(&hs).unwrap(), line);
    assert!(decode_handshake(r#"{"protocol": "other", "version": 1, "normalized": true, "max_batch": 8}"#).is_err());
    assert!(decode_handshake(r#"{"protocol": "lerg-score", "version": 2, "normalized": true, "max_batch": 8}"#).is_err());
}

#[test]
fn golden_reply_round_trips() {
    let line = golden("reply_uniform100.jsonl");
    let reply = decode_reply(&line).unwrap();
    match &reply {
        ScoreReply::Scores { id, logprobs } => {
            assert_eq!(id, "abc");
            assert_eq!(logprobs.len(), 3);
            assert!(logprobs.iter().flatten().all(|&v| v == (1.0f64 / 100.0).ln()));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(encode_line(&reply).unwrap(), line);
}

#[test]
fn golden_error_reply_round_trips() {
    let line = golden("error_reply.jsonl");
    match decode_reply(&line).unwrap() {
        ScoreReply::Error { id, error } => {
            assert_eq!(id, "abc");
            assert_eq!(error.code, "bad_request");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(encode_line(&decode_reply(&line).unwrap()).unwrap(), line);
}

#[test]
fn golden_floats_parse_bit_exact() {
    let bits: Vec<u64> = std::fs::read_to_string(fixture("golden/float_reply.bits"))
        .unwrap()
        .lines()
        .map(|l| u64::from_str_radix(l, 16).unwrap())
        .collect();
    let line = golden("float_reply.jsonl");
    let ScoreReply::Scores { logprobs, .. } = decode_reply(&line).unwrap() else {
        panic!("expected scores");
    };
    let got: Vec<u64> = logprobs[0].iter().map(|v| v.to_bits()).collect();
    assert_eq!(got, bits);
    assert_eq!(encode_line(&decode_reply(&line).unwrap()).unwrap(), line);
}

fn spawn_raw(args: &str) -> (Child, BufReader<std::process::ChildStdout>) {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(stub(args))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let out = BufReader::new(child.stdout.take().unwrap());
    (child, out)
}

fn read_line(out: &mut BufReader<std::process::ChildStdout>) -> String {
    let mut s = String::new();
    out.read_line(&mut s).unwrap();
    s.trim_end().to_string()
}

#[test]
fn stub_replies_match_golden_bytes() {
    if !have_python() {
        return;
    }
    let (mut child, mut out) = spawn_raw("uniform 100");
    assert_eq!(read_line(&mut out), golden("handshake.jsonl"));
    let stdin = child.stdin.as_mut().unwrap();
    writeln!(stdin, "{}", golden("request.jsonl")).unwrap();
    stdin.flush().unwrap();
    assert_eq!(read_line(&mut out), golden("reply_uniform100.jsonl"));
    // Malformed line: error reply, server stays up.
    writeln!(stdin, "not json").unwrap();
    stdin.flush().unwrap();
    let err = decode_reply(&read_line(&mut out)).unwrap();
    assert!(matches!(err, ScoreReply::Error { ref error, .. } if error.code == "bad_request"));
    writeln!(stdin, "{}", golden("request.jsonl")).unwrap();
    stdin.flush().unwrap();
    assert_eq!(read_line(&mut out), golden("reply_uniform100.jsonl"));
    let _ = child.kill();
    let _ = child.wait();
}

#[test]
fn uniform_stub_scores_log_one_over_v() {
    if !have_python() {
        return;
    }
    let client = RemoteClient::connect(&RemoteConfig::stdio(stub("uniform 100"))).unwrap();
    assert!(client.manifest().normalized);
    let out = client
        .score_many(&[strings(&["a"]), vec![], strings(&["b", "c"])], &strings(&["x", "y", "z"]))
        .unwrap();
    assert_eq!(out.len(), 3);
    for s in out {
        for v in s.0 {
            assert!((v + 4.60517).abs() < 1e-5);
        }
    }
}

#[test]
fn additive_stub_reproduces_in_process_explanations() {
    if !have_python() {
        return;
    }
    let spec = AdditiveToySpec {
        context: strings(&["rain", "cold", "today", "wind", "tonight"]),
        base: vec![-0.3, -0.7, -0.05],
        weights: vec![
            vec![-0.2, -1.1, -0.4],
            vec![-0.9, -0.05, -0.3],
            vec![-0.01, -0.6, -0.2],
            vec![-0.5, -0.25, -1.3],
            vec![-0.15, -0.8, -0.45],
        ],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let local = AdditiveToy::new(spec).unwrap();
    let remote = RemoteClient::connect(&RemoteConfig::stdio(stub(&format!("additive {}", path.display())))).unwrap();
    let ex = Example::parse("t", "rain cold today wind tonight", "take a coat").unwrap();
    let plan = PerturbPlan::with_seed(21).with_samples(300);
    let pairs = [
        (lerg_s(&local, &ex, &plan).unwrap(), lerg_s(&remote, &ex, &plan).unwrap()),
        (fit_lerg_l(&local, &ex, &plan).unwrap(), fit_lerg_l(&remote, &ex, &plan).unwrap()),
        (exact_lerg_s(&local, &ex).unwrap(), exact_lerg_s(&remote, &ex).unwrap()),
    ];
    for (a, b) in &pairs {
        assert!(a.phi.max_abs_diff(&b.phi) <= 1e-12, "{:?}", a.method);
    }
}

#[test]
fn wave_stub_reproduces_in_process_explanations() {
    if !have_python() {
        return;
    }
    let mut config = RemoteConfig::stdio(stub("wave"));
    config.max_in_flight = 3;
    let remote = RemoteClient::connect(&config).unwrap();
    let local = Wave::new();
    let ex = sample_example();
    let plan = PerturbPlan::with_seed(4).with_samples(200);
    let a = sampled_shapley(&local, &ex, &plan, true).unwrap();
    let b = sampled_shapley(&remote, &ex, &plan, true).unwrap();
    assert!(a.phi.max_abs_diff(&b.phi) <= 1e-12);
    let a = lerg_s(&local, &ex, &plan).unwrap();
    let b = lerg_s(&remote, &ex, &plan).unwrap();
    assert!(a.phi.max_abs_diff(&b.phi) <= 1e-12);
}

#[test]
fn many_batches_keep_request_order() {
    if !have_python() {
        return;
    }
    let mut config = RemoteConfig::stdio(stub("wave"));
    config.max_in_flight = 4;
    let remote = RemoteClient::connect(&config).unwrap();
    let contexts: Vec<Vec<String>> = (0..45).map(|k| (0..k % 6).map(|i| "x".repeat(i + k % 5)).collect()).collect();
    let response = strings(&["a", "b", "c", "d"]);
    let got = remote.score_many(&contexts, &response).unwrap();
    let want = Wave::new().score_many(&contexts, &response).unwrap();
    assert_eq!(got, want);
    // A single batch above the declared max is refused before sending.
    assert!(matches!(remote.score_batch(&contexts[..9], &response), Err(LergError::Validation(_))));
}

#[test]
fn error_reply_surfaces_as_protocol_error() {
    if !have_python() {
        return;
    }
    let remote = RemoteClient::connect(&RemoteConfig::stdio(stub("uniform 10 --error"))).unwrap();
    let err = remote.score(&strings(&["a"]), &strings(&["b"])).unwrap_err();
    assert!(matches!(err, LergError::ModelProtocolError(ref m) if m.contains("model_failure")), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn mismatched_id_and_nan_are_rejected() {
    if !have_python() {
        return;
    }
    let remote = RemoteClient::connect(&RemoteConfig::stdio(stub("uniform 10 --bad-id"))).unwrap();
    assert!(matches!(remote.score(&[], &strings(&["b"])), Err(LergError::ModelProtocolError(_))));
    let remote = RemoteClient::connect(&RemoteConfig::stdio(stub("uniform 10 --nan"))).unwrap();
    let err = remote.score(&[], &strings(&["b"])).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn handshake_failure_is_retried() {
    if !have_python() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("tried");
    let cmd = stub(&format!("uniform 10 --fail-until-marker {}", marker.display()));
    let remote = RemoteClient::connect(&RemoteConfig::stdio(cmd)).unwrap();
    assert!(marker.exists());
    assert_eq!(remote.score(&[], &strings(&["b"])).unwrap().0.len(), 1);
}

#[test]
fn dead_server_is_unavailable_after_retries() {
    let start = std::time::Instant::now();
    let err = RemoteClient::connect(&RemoteConfig::stdio("exit 1")).unwrap_err();
    assert!(matches!(err, LergError::RemoteUnavailable(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    // Two backoff sleeps: 100 ms then 200 ms.
    assert!(start.elapsed() >= std::time::Duration::from_millis(300));
}

#[test]
fn crashed_server_is_respawned() {
    if !have_python() {
        return;
    }
    let mut config = RemoteConfig::stdio(stub("wave --die-after 1"));
    config.max_in_flight = 1;
    let remote = RemoteClient::connect(&config).unwrap();
    let response = strings(&["a", "b"]);
    for k in 0..3 {
        let ctx = vec!["y".repeat(k + 1)];
        assert_eq!(remote.score(&ctx, &response).unwrap(), Wave::new().score(&ctx, &response).unwrap());
    }
}

#[test]
fn http_transport_matches_in_process() {
    if !have_python() {
        return;
    }
    let (mut child, mut out) = spawn_raw("wave --http");
    let port = read_line(&mut out);
    let remote = RemoteClient::connect(&RemoteConfig::http(format!("http://127.0.0.1:{port}"))).unwrap();
    assert_eq!(remote.manifest().max_batch, 8);
    let ex = sample_example();
    let plan = PerturbPlan::with_seed(8).with_samples(100);
    let a = lerg_s(&Wave::new(), &ex, &plan).unwrap();
    let b = lerg_s(&remote, &ex, &plan).unwrap();
    let _ = child.kill();
    let _ = child.wait();
    assert!(a.phi.max_abs_diff(&b.phi) <= 1e-12);
}
