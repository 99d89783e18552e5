use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request};
use clap::CommandFactory;
use gramforge::model::NGramModel;
use gramforge_cli::{run, Cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, SUBCOMMANDS};
use gramforge_service::{router, ServiceConfig, Session};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, text: &str) -> String {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_owned()
    }

    fn run(&self, args: &[&str]) -> Outcome {
        let workspace = self.path("ws");
        let mut argv = vec!["gramforge", "--workspace", workspace.to_str().unwrap()];
        argv.extend_from_slice(args);
        let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
        let code = run(argv, &mut stdout, &mut stderr);
        Outcome {
            code,
            stdout: String::from_utf8(stdout).unwrap(),
            stderr: String::from_utf8(stderr).unwrap(),
        }
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert_eq!(out.code, EXIT_OK, "{args:?}: {}", out.stderr);
        out.stdout
    }
}

fn parse(text: &str) -> Value {
    assert!(text.ends_with('\n'), "missing trailing newline: {text:?}");
    assert_eq!(
        text.matches('\n').count(),
        1,
        "expected one JSON line: {text:?}"
    );
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn subcommand_list_matches_parser() {
    let parser = Cli::command();
    let mut declared: Vec<&str> = parser.get_subcommands().map(|c| c.get_name()).collect();
    declared.retain(|name| *name != "help");
    let mut expected = SUBCOMMANDS.to_vec();
    declared.sort_unstable();
    expected.sort_unstable();
    assert_eq!(declared, expected);

    let ws = Workspace::new();
    for name in SUBCOMMANDS {
        let out = ws.run(&[name, "--help"]);
        assert_eq!(out.code, EXIT_OK, "{name} --help");
        assert!(out.stdout.contains("Usage"), "{name}");
    }
}

#[test]
fn trigram_example_through_the_cli() {
    let ws = Workspace::new();
    let corpus = ws.file("a.txt", "The cat is sleeping\n");
    let model = ws.path("m.gf");
    let model = model.to_str().unwrap();
    ws.ok(&["build", "--corpus", &corpus, "--n", "3", "--out", model]);
    let loaded = NGramModel::load_from_path(model).unwrap();
    assert_eq!(
        loaded.canonical_entries(),
        vec![
            ("cat is".to_owned(), "sleeping", 1),
            ("the cat".to_owned(), "is", 1)
        ]
    );
    assert_eq!(
        ws.ok(&["predict", "--model", model, "--prompt", "the cat", "--count", "1"]),
        "is\n"
    );
    assert_eq!(
        ws.ok(&["complete", "--model", model, "--prompt", "The cat", "--count", "2"]),
        "the cat is sleeping\n"
    );
}

#[test]
fn every_subcommand_emits_json() {
    let ws = Workspace::new();
    let a = ws.file(
        "a.txt",
        "the cat is sleeping on the mat and the cat is happy\n",
    );
    let b = ws.file("b.txt", "the dog is barking at the cat\n");
    let model = ws.path("m.gf");
    let model = model.to_str().unwrap();

    let ingested = parse(&ws.ok(&["--json", "ingest", "--corpus", &a, "--corpus", &b]));
    assert_eq!(ingested["added"].as_array().unwrap().len(), 2);
    let listing = parse(&ws.ok(&["corpus-list", "--json"]));
    assert_eq!(listing["stats"]["document_count"], 2);

    let built = parse(&ws.ok(&["--json", "build", "--n", "2", "--out", model]));
    assert_eq!(built["stats"]["n"], 2);
    let updated = parse(&ws.ok(&["--json", "update", "--model", model, "--corpus", &a]));
    assert!(
        updated["stats"]["total_ngrams"].as_u64().unwrap()
            > built["stats"]["total_ngrams"].as_u64().unwrap()
    );
    let pruned = parse(&ws.ok(&["--json", "prune", "--model", model, "--threshold", "2"]));
    assert!(pruned["removed"].as_u64().unwrap() > 0);

    for verb in ["predict", "complete"] {
        let reply = parse(&ws.ok(&[
            "--json", verb, "--model", model, "--prompt", "the", "--count", "3", "--top", "2",
        ]));
        assert_eq!(reply["prompt_tokens"][0], "the");
    }
    let pp = parse(&ws.ok(&["--json", "perplexity", "--model", model, "--corpus", &b]));
    assert!(pp["perplexity"].as_f64().unwrap() >= 1.0);

    let bench = parse(&ws.ok(&["--json", "bench", "--corpus", &a, "--n", "1", "--n", "2"]));
    assert!(bench[0]["record"]["build_n2_ms"].is_number());
    assert!(bench[0]["record"]["build_n3_ms"].is_null());
    let throughput = parse(&ws.ok(&["--json", "bench", "--throughput"]));
    assert!(throughput["tokens_per_second"].as_f64().unwrap() > 0.0);

    let cleared = parse(&ws.ok(&["--json", "corpus-clear"]));
    assert_eq!(cleared["stats"]["document_count"], 0);
}

#[test]
fn bench_writes_csv() {
    let ws = Workspace::new();
    let a = ws.file("a.txt", &"to be or not to be ".repeat(100));
    let csv = ws.path("bench.csv");
    let printed = ws.ok(&[
        "bench",
        "--corpus",
        &a,
        "--n",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let written = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(printed, written);
    let mut lines = written.lines();
    assert_eq!(lines.next(), Some(gramforge::eval::CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    assert!(row[2].is_empty() && !row[3].is_empty() && row[4].is_empty());
}

#[test]
fn usage_errors_exit_one() {
    let ws = Workspace::new();
    let a = ws.file("a.txt", "a b c");
    for args in [
        vec!["frobnicate"],
        vec!["build", "--corpus", &a, "--n", "0"],
        vec!["build", "--corpus", &a, "--n", "9"],
        vec!["build", "--corpus", &a],
        vec!["predict", "--prompt", "a", "--count", "0"],
        vec!["predict", "--prompt", "a", "--smoothing", "kneser-ney"],
        vec!["predict", "--prompt", "a", "--k", "1.5"],
        vec!["prune", "--threshold", "-1"],
        vec!["bench", "--corpus", &a, "--n", "5"],
        vec!["bench", "--corpus", &a, "--repetitions", "2"],
        vec!["ingest"],
        vec!["serve", "--port", "notaport"],
    ] {
        let out = ws.run(&args);
        assert_eq!(out.code, EXIT_USAGE, "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_two() {
    let ws = Workspace::new();
    let missing = ws.path("missing.gf");
    let missing = missing.to_str().unwrap();
    let out = ws.run(&["predict", "--model", missing, "--prompt", "a"]);
    assert_eq!(out.code, EXIT_RUNTIME);
    assert!(out.stderr.contains("missing.gf"));

    let out = ws.run(&["--json", "predict", "--model", missing, "--prompt", "a"]);
    assert_eq!(out.code, EXIT_RUNTIME);
    assert_eq!(parse(&out.stderr)["error"], "io");

    let bad = ws.file("bad.gf", "not a model\n");
    let out = ws.run(&["--json", "predict", "--model", &bad, "--prompt", "a"]);
    assert_eq!(parse(&out.stderr)["error"], "version_mismatch");

    let a = ws.file("a.txt", "a b c d");
    let model = ws.path("m.gf");
    let model = model.to_str().unwrap();
    ws.ok(&["build", "--corpus", &a, "--n", "3", "--out", model]);
    let out = ws.run(&[
        "--json",
        "predict",
        "--model",
        model,
        "--prompt",
        "b",
        "--no-backoff",
    ]);
    assert_eq!(out.code, EXIT_RUNTIME);
    assert_eq!(parse(&out.stderr)["error"], "insufficient_context");

    let out = ws.run(&["build", "--n", "2"]);
    assert_eq!(out.code, EXIT_RUNTIME, "empty workspace corpus");
    let empty = ws.file("empty.txt", "1234 !!");
    assert_eq!(ws.run(&["ingest", "--corpus", &empty]).code, EXIT_RUNTIME);
}

async fn service_body(app: &axum::Router, request: Request<Body>) -> String {
    let response = app.clone().oneshot(request).await.unwrap();
    String::from_utf8(
        response
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
    .unwrap()
}

#[tokio::test]
async fn json_output_is_byte_identical_to_service() {
    let text = "the cat sat on the mat the cat ate the rat and the dog saw the cat on the mat";
    let ws = Workspace::new();
    let corpus = ws.file("c.txt", text);
    let model = ws.path("m.gf");
    let model = model.to_str().unwrap();
    ws.ok(&["build", "--corpus", &corpus, "--n", "3", "--out", model]);

    let app = router(Session::new(ServiceConfig::default()));
    service_body(
        &app,
        Request::post("/corpus")
            .body(Body::from(text.to_owned()))
            .unwrap(),
    )
    .await;
    service_body(
        &app,
        Request::post("/model")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(r#"{"n":3}"#))
            .unwrap(),
    )
    .await;

    let cases: [(&str, Vec<&str>); 6] = [
        (
            "/predict?prompt=the+cat&count=4",
            vec!["predict", "--prompt", "the cat", "--count", "4"],
        ),
        (
            "/predict?prompt=the&count=3&top=3&smoothing=good-turing",
            vec![
                "predict",
                "--prompt",
                "the",
                "--count",
                "3",
                "--top",
                "3",
                "--smoothing",
                "good-turing",
            ],
        ),
        (
            "/predict?prompt=zebra+cat&count=2&backoff=false&smoothing=addk&k=0.5",
            vec![
                "predict",
                "--prompt",
                "zebra cat",
                "--count",
                "2",
                "--no-backoff",
                "--smoothing",
                "addk",
                "--k",
                "0.5",
            ],
        ),
        (
            "/perplexity?text=the+cat+sat+on+the+rat",
            vec!["perplexity", "--prompt", "the cat sat on the rat"],
        ),
        (
            "/perplexity?text=the+cat+saw+a+dog&smoothing=mle",
            vec![
                "perplexity",
                "--prompt",
                "the cat saw a dog",
                "--smoothing",
                "mle",
            ],
        ),
        (
            "/perplexity?text=the+mat+the+cat&smoothing=good-turing",
            vec![
                "perplexity",
                "--prompt",
                "the mat the cat",
                "--smoothing",
                "good-turing",
            ],
        ),
    ];
    for (uri, args) in cases {
        let served = service_body(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
        let mut argv = vec!["--json", args[0], "--model", model];
        argv.extend_from_slice(&args[1..]);
        let printed = ws.ok(&argv);
        assert_eq!(printed, served, "{uri}");
    }
}

#[test]
fn workspace_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("a.txt");
    std::fs::write(&corpus, "one two three").unwrap();
    let ws = dir.path().join("env-ws");
    let status = Command::new(env!("CARGO_BIN_EXE_gramforge"))
        .args(["ingest", "--corpus", corpus.to_str().unwrap()])
        .env("GRAMFORGE_WORKSPACE", &ws)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(ws.join("corpus").join("manifest.json").exists());
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(
        stream,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

fn serve(workspace: &Path, port: u16) -> std::process::Child {
    Command::new(env!("CARGO_BIN_EXE_gramforge"))
        .args(["serve", "--port", &port.to_string()])
        .env("GRAMFORGE_WORKSPACE", workspace)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap()
}

#[cfg(unix)]
#[test]
fn serve_answers_and_stops_on_sigterm() {
    let ws = Workspace::new();
    let corpus = ws.file("a.txt", "the cat is sleeping");
    ws.ok(&["ingest", "--corpus", &corpus]);
    let port = free_port();
    let mut child = serve(&ws.path("ws"), port);

    let deadline = Instant::now() + Duration::from_secs(20);
    let listing = loop {
        if let Some(reply) = http_get(port, "/corpus") {
            break reply;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(listing.starts_with("HTTP/1.1 200"), "{listing}");
    assert!(listing.contains("\"total_tokens\":4"));
    let predict = http_get(port, "/predict?prompt=the").unwrap();
    assert!(predict.starts_with("HTTP/1.1 409"));
    assert!(predict.contains("model_not_built"));

    let killed = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert!(status.success(), "{status:?}");
}

#[test]
fn serve_on_busy_port_fails() {
    let ws = Workspace::new();
    let taken = TcpListener::bind("0.0.0.0:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let mut child = serve(&ws.path("ws"), port);
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(EXIT_RUNTIME));
    let mut stderr = String::new();
    child
        .stderr
        .take()
        .unwrap()
        .read_to_string(&mut stderr)
        .unwrap();
    assert!(stderr.contains("error"), "{stderr}");
}
