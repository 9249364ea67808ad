#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

/// Toy config pointed at `work` for every output, with `patch` merged on top.
pub fn toy_config(work: &Path, patch: Value) -> Value {
    let mut config = json!({
        "dataset_dir": toy_dir(),
        "encoder": { "name": "hashed-test", "dim": 384, "endpoint": "builtin:test" },
        "fusion": { "alpha": 1.0, "beta": 1.0, "gamma": 1.0, "max_vocab": 1024 },
        "rerank": { "mode": "none" },
        "cutoffs": [1, 3, 5, 10],
        "top_k": 10,
        "index_path": work.join("index.tmx"),
        "output_dir": work.join("out"),
        "seed": 7,
        "run_tag": "toy-hybrid",
        "workers": 4
    });
    merge(&mut config, patch);
    config
}

pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

pub fn write_config(work: &Path, name: &str, config: &Value) -> PathBuf {
    std::fs::create_dir_all(work).unwrap();
    let path = work.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

pub fn trimodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trimodal"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

type Handler = dyn Fn(&str, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering each request with `handler(path, body)`.
pub fn serve(handler: Box<Handler>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handler: Arc<Handler> = Arc::from(handler);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let handler = Arc::clone(&handler);
            thread::spawn(move || handle(stream, handler.as_ref()));
        }
    });
    format!("http://{addr}")
}

fn handle(mut stream: TcpStream, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, payload) = handler(&path, &body);
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

/// An embedding server returning character-trigram hashes folded into `dim`.
pub fn embedding_server(dim: usize) -> String {
    serve(Box::new(move |_, body| {
        let rows: Vec<Vec<f64>> = body["texts"]
            .as_array()
            .map(|t| t.iter().map(|s| trigram_vector(s.as_str().unwrap_or(""), dim)).collect())
            .unwrap_or_default();
        (200, json!({ "embeddings": rows }).to_string())
    }))
}

fn trigram_vector(text: &str, dim: usize) -> Vec<f64> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut v = vec![0.0; dim];
    for w in chars.windows(3) {
        let h = w.iter().fold(2166136261u32, |h, c| (h ^ *c as u32).wrapping_mul(16777619));
        v[h as usize % dim] += 1.0;
    }
    v[0] += 1e-3;
    v
}

/// A chat-completions server that always answers with `content`.
pub fn chat_server(content: &'static str) -> String {
    serve(Box::new(move |path, _| {
        if path != "/v1/chat/completions" {
            return (404, "{}".into());
        }
        (200, json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
    }))
}

/// A port with nothing listening.
pub fn dead_endpoint() -> String {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    format!("http://127.0.0.1:{port}")
}
