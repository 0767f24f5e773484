use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;
use std::time::Duration;

use beamtalk_core::tagger::{save_model, TaggerModel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamtalk"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A corpus and a lightly trained model, built once through the binary.
fn trained() -> (&'static Path, &'static Path) {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    let (_, corpus, model) = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let model = dir.path().join("tagger.model");
        let g = run(&["generate", "--n", "1500", "--seed", "42", "--out", p(&corpus)]);
        assert!(g.status.success(), "{}", stderr(&g));
        let t = run(&["train", "--corpus", p(&corpus), "--epochs", "3", "--out", p(&model)]);
        assert!(t.status.success(), "{}", stderr(&t));
        (dir, corpus, model)
    });
    (corpus, model)
}

#[test]
fn zero_paragraphs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = run(&["generate", "--n", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n must be positive"));
    assert!(!out.exists(), "nothing is written before flags validate");
}

#[test]
fn unknown_flags_and_subcommands_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--n", "many", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn generation_is_deterministic_and_reports_slot_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run(&["generate", "--n", "500", "--seed", "9", "--out", p(&a)]);
    let ob = run(&["generate", "--n", "500", "--seed", "9", "--out", p(&b)]);
    assert!(oa.status.success());
    let text = stdout(&oa);
    assert!(text.starts_with("train 400 paragraphs"), "{text}");
    assert!(text.contains("\ntest 100 paragraphs"));
    assert!(text.contains("slots mean "));
    assert!(ob.status.success());
    assert_eq!(std::fs::read(a.join("corpus.jsonl")).unwrap(), std::fs::read(b.join("corpus.jsonl")).unwrap());
}

#[test]
fn bad_template_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.tsv");
    std::fs::write(&t, "this is not a template line\n").unwrap();
    let o = run(&["generate", "--templates", p(&t), "--n", "10", "--out", p(&dir.path().join("c"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_are_data_errors() {
    let o = run(&["train", "--corpus", "/nonexistent/corpus", "--out", "/tmp/never.model"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("reading corpus"));
    let o = run(&["interpret", "--model", "/nonexistent/model", "heat"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn training_twice_gives_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    assert!(run(&["generate", "--n", "200", "--seed", "4", "--out", p(&c)]).status.success());
    let (m1, m2) = (dir.path().join("m1"), dir.path().join("m2"));
    let o = run(&["train", "--corpus", p(&c), "--epochs", "1", "--seed", "3", "--out", p(&m1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(" s\n"), "wall time is printed");
    assert!(run(&["train", "--corpus", p(&c), "--epochs", "1", "--seed", "3", "--out", p(&m2)]).status.success());
    assert_eq!(std::fs::read(m1).unwrap(), std::fs::read(m2).unwrap());
}

fn metric_line(text: &str, name: &str) -> (f64, usize, usize) {
    let line = text.lines().find(|l| l.starts_with(&format!("{name} "))).unwrap();
    let parts: Vec<&str> = line.split([' ', '(', '/', ')']).filter(|s| !s.is_empty()).collect();
    assert_eq!(parts.len(), 4, "{line}");
    assert_eq!(parts[1].split('.').nth(1).map(str::len), Some(3), "{line}");
    (parts[1].parse().unwrap(), parts[2].parse().unwrap(), parts[3].parse().unwrap())
}

#[test]
fn eval_prints_fraction_with_counts() {
    let (corpus, model) = trained();
    let o = run(&["eval", "--model", p(model), "--corpus", p(corpus)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    for name in ["paragraph", "token_all", "token_bi"] {
        let (f, correct, total) = metric_line(&text, name);
        assert!((f - correct as f64 / total as f64).abs() < 5e-4);
    }
    assert_eq!(metric_line(&text, "paragraph").2, 300);

    let o = run(&["eval", "--model", p(model), "--corpus", p(corpus), "--format", "records"]);
    let lines: Vec<serde_json::Value> =
        stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["kind"], "eval");
    assert_eq!(lines[0]["format_version"], 1);
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1]["metric"], "paragraph");
}

#[test]
fn untrained_model_scores_near_zero_on_entity_tokens() {
    let (corpus, _) = trained();
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.model");
    save_model(&TaggerModel::empty(), &empty).unwrap();
    let o = run(&["eval", "--model", p(&empty), "--corpus", p(corpus)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (bi, _, _) = metric_line(&stdout(&o), "token_bi");
    assert!(bi < 0.1, "{bi}");
}

#[test]
fn interpret_prints_spans_and_script() {
    let (_, model) = trained();
    let o = run(&["interpret", "--model", p(model), "Change humidity to 45"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("B-HUMIDITY"), "{text}");
    assert!(text.contains("  set_humidity(target=45.0)\n"), "{text}");
}

fn repl(args: &[&str], input: &str) -> String {
    let (_, model) = trained();
    let mut child = bin()
        .arg("repl")
        .args(["--model", p(model)])
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    stdout(&o)
}

#[test]
fn repl_rejection_leaves_state_alone() {
    let text = repl(&["--execute"], "Set temperature to 200 at 20 per minute.\nn\n:state\n");
    assert!(text.contains("rejected; state unchanged"), "{text}");
    assert!(text.contains("\"temperature\":25.0"));
    assert!(text.contains("\"clock\":0.0"));
}

#[test]
fn repl_without_execute_only_previews() {
    let text = repl(&[], "Set temperature to 200 at 20 per minute.\ny\n:state\n");
    assert!(text.contains("preview only"), "{text}");
    assert!(text.contains("\"clock\":0.0"));
}

#[test]
fn repl_execution_advances_the_clock_by_the_ramp_time() {
    let text = repl(&["--execute"], "Set temperature to 200 at 20 per minute.\ny\nSet the temperature to 100 at 5 per minute.\ny\n");
    let first = (200.0f64 - 25.0).abs() / 20.0 * 60.0;
    let second = (100.0f64 - 200.0).abs() / 5.0 * 60.0;
    assert!(text.contains(&format!("clock +{first:.1} s (now {first:.1} s)")), "{text}");
    assert!(text.contains(&format!("clock +{second:.1} s (now {:.1} s)", first + second)), "{text}");
}

fn http(addr: &str, request: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[cfg(unix)]
#[test]
fn serve_without_a_model_is_degraded_and_stops_on_sigint() {
    let dir = tempfile::tempdir().unwrap();
    let history = dir.path().join("history.jsonl");
    let mut child = bin()
        .args(["serve", "--port", "0"])
        .env("BEAMTALK_HISTORY", &history)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.strip_prefix("listening on http://").expect(&first).to_string();

    let state = http(&addr, "GET /state HTTP/1.1\r\nhost: x\r\nconnection: close\r\n\r\n");
    assert!(state.starts_with("HTTP/1.1 200"), "{state}");
    let body = r#"{"text":"Set temperature to 200"}"#;
    let req = format!(
        "POST /interpret HTTP/1.1\r\nhost: x\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    assert!(http(&addr, &req).starts_with("HTTP/1.1 503"));

    // the port is taken now, so a second server must fail
    let port = addr.rsplit(':').next().unwrap();
    let busy = run(&["serve", "--port", port]);
    assert_eq!(busy.status.code(), Some(2));

    let kill = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(kill.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(history.exists(), "history is flushed on shutdown");
}
