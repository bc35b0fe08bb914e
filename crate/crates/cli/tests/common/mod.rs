#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::thread;

use serde_json::{json, Value};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_json(name: &str) -> Value {
    let text = std::fs::read_to_string(fixtures_dir().join(name)).expect("fixture file");
    serde_json::from_str(&text).expect("fixture json")
}

/// Fixture databases built once per test binary through the CLI itself.
pub fn databases() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let scripts = fixtures_dir().join("databases");
        let out = tasql(&["materialize-fixtures", "--scripts", s(&scripts), "--out", s(dir.path())]);
        assert!(out.status.success(), "materialize failed: {}", String::from_utf8_lossy(&out.stderr));
        dir
    })
    .path()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn tasql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tasql"))
        .args(args)
        .env_remove("TASQL_API_KEY")
        .output()
        .expect("tasql runs")
}

/// Writes a dataset file holding the given examples.
pub fn write_dataset(path: &Path, examples: &[Value]) {
    std::fs::write(path, serde_json::to_string_pretty(&Value::Array(examples.to_vec())).unwrap()).unwrap();
}

/// Answers the three prompt kinds the pipeline issues, keyed by the
/// question embedded in the prompt.
#[derive(Default, Clone)]
pub struct Oracle {
    /// question → dummy SQL reply
    pub sql: BTreeMap<String, String>,
    /// question → symbolic plan reply
    pub plans: BTreeMap<String, String>,
}

impl Oracle {
    /// Gold SQL for every example, plans where `plans` has one.
    pub fn from_examples(examples: &[Value], plans: &[Value]) -> Self {
        let mut o = Oracle::default();
        for ex in examples {
            o.sql.insert(ex["question"].as_str().unwrap().into(), ex["SQL"].as_str().unwrap().into());
        }
        for p in plans {
            o.plans.insert(p["question"].as_str().unwrap().into(), p["plan"].as_str().unwrap().into());
        }
        o
    }

    pub fn answer(&self, prompt: &str) -> String {
        if prompt.starts_with("# Summarize the column") {
            let column = prompt.lines().find_map(|l| l.strip_prefix("column = ")).unwrap_or("\"?\"");
            return format!("Column {} of the fixture database.", column.trim_matches('"'));
        }
        let question = last_question(prompt);
        if prompt.contains("# symbolic representation") {
            return match self.plans.get(&question) {
                Some(plan) => format!("```python\n{plan}\n```"),
                None => "I would need to look at the data before answering.".into(),
            };
        }
        match self.sql.get(&question) {
            Some(sql) => format!("```sql\n{sql}\n```"),
            None => "SELECT 1".into(),
        }
    }
}

fn last_question(prompt: &str) -> String {
    prompt
        .lines()
        .filter_map(|l| l.strip_prefix("question = "))
        .next_back()
        .and_then(|q| serde_json::from_str::<String>(q).ok())
        .unwrap_or_default()
}

/// Minimal chat-completions backend on a loopback port.
pub struct MockBackend {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl MockBackend {
    pub fn start(oracle: Oracle) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&requests);
        let oracle = Arc::new(oracle);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let oracle = Arc::clone(&oracle);
                let counter = Arc::clone(&counter);
                thread::spawn(move || {
                    if serve(stream, &oracle).is_ok() {
                        counter.fetch_add(1, Ordering::SeqCst);
                    }
                });
            }
        });
        MockBackend { url, requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, oracle: &Oracle) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let prompt = request["messages"][0]["content"].as_str().unwrap_or("");
    let reply = json!({ "choices": [{ "message": { "role": "assistant", "content": oracle.answer(prompt) } }] }).to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}

/// Flags shared by `run` and `link`.
pub fn run_args<'a>(
    cmd: &'a str,
    dataset: &'a str,
    out: &'a str,
    cache: &'a str,
    mode: &'a str,
    url: &'a str,
) -> Vec<&'a str> {
    vec![
        cmd,
        "--dataset-path",
        dataset,
        "--databases-root",
        s(databases()),
        "--output-dir",
        out,
        "--cache-path",
        cache,
        "--gateway-mode",
        mode,
        "--backend-url",
        url,
        "--concurrency",
        "4",
    ]
}

/// Flags shared by `eval` and `audit`.
pub fn report_args<'a>(cmd: &'a str, dataset: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![cmd, "--dataset-path", dataset, "--databases-root", s(databases()), "--output-dir", out]
}

/// predictions.jsonl whose final SQL is the gold SQL of every example.
pub fn gold_predictions(path: &Path, examples: &[Value]) {
    let mut out = String::new();
    for ex in examples {
        let rec = json!({
            "example_id": ex["question_id"].to_string(),
            "db_id": ex["db_id"],
            "dummy_sql": ex["SQL"],
            "linked_columns": [],
            "symbolic_plan": null,
            "final_sql": ex["SQL"],
            "diagnostics": {
                "parse_ok": true, "fallback": false, "unresolved": [], "response_sql": null,
                "plan_warnings": [], "validation": [], "join_tables": [], "error": null
            }
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
