//! Remote embedding and chat clients against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use trimodal_core::encoder::{EncoderError, HttpEmbedder};
use trimodal_core::index::ModalityScores;
use trimodal_core::rerank::{
    Candidate, ChatCompletionsClient, LlmError, ModalityWeights, PromptSettings, RerankMode, Reranker,
};
use trimodal_core::{embed_texts, EmbeddingProvider, EncoderProfile};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Serves `Connection: close` responses from `handler(request_number, body)`
/// until the test process exits.
fn serve(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handler: Arc<Handler> = Arc::from(handler);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let log = Arc::clone(&log);
            let handler = Arc::clone(&handler);
            thread::spawn(move || handle(stream, &log, handler.as_ref()));
        }
    });
    (format!("http://{addr}"), seen)
}

fn handle(stream: TcpStream, log: &Mutex<Vec<Seen>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap(),
            "authorization" => authorization = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let n = {
        let mut log = log.lock().unwrap();
        log.push(Seen {
            path,
            authorization,
            body: body.clone(),
        });
        log.len()
    };
    let (status, payload) = handler(n, &body);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

/// Embeds each text as `[chars, 1]`.
fn length_embeddings(body: &Value) -> String {
    let texts = body["texts"].as_array().unwrap();
    let rows: Vec<Value> = texts
        .iter()
        .map(|t| json!([t.as_str().unwrap().chars().count() as f64, 1.0]))
        .collect();
    json!({ "embeddings": rows }).to_string()
}

fn profile(endpoint: &str) -> EncoderProfile {
    let mut p = EncoderProfile::new("remote-test", 2, endpoint);
    p.batch_size = 2;
    p.max_in_flight = 2;
    p.attempts = 3;
    p.backoff_ms = 5;
    p.timeout_secs = 5;
    p
}

#[test]
fn batches_preserve_order_and_send_bearer() {
    let (url, seen) = serve(Box::new(|_, body| (200, length_embeddings(body))));
    let embedder = HttpEmbedder::with_api_key(profile(&url), Some("secret".into()));
    let texts: Vec<String> = ["a", "bb", "ccc", "dddd", "eeeee"].iter().map(|s| s.to_string()).collect();
    let out = embed_texts(&embedder, &texts).unwrap();
    let firsts: Vec<f64> = out.iter().map(|v| v.values()[0]).collect();
    assert_eq!(firsts, [1.0, 2.0, 3.0, 4.0, 5.0]);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    for s in seen.iter() {
        assert_eq!(s.path, "/embed");
        assert_eq!(s.authorization.as_deref(), Some("Bearer secret"));
        assert!(s.body["texts"].as_array().unwrap().len() <= 2);
    }
}

#[test]
fn transient_failures_are_retried() {
    let (url, seen) = serve(Box::new(|n, body| {
        if n == 1 {
            (503, "{}".into())
        } else {
            (200, length_embeddings(body))
        }
    }));
    let embedder = HttpEmbedder::with_api_key(profile(&url), None);
    let out = embedder.embed_batch(&["xyz".to_string()]).unwrap();
    assert_eq!(out, vec![vec![3.0, 1.0]]);
    assert_eq!(seen.lock().unwrap().len(), 2);
    assert!(seen.lock().unwrap()[0].authorization.is_none());
}

#[test]
fn exhausted_retries_report_attempts() {
    let (url, seen) = serve(Box::new(|_, _| (500, "{}".into())));
    let embedder = HttpEmbedder::with_api_key(profile(&url), None);
    match embed_texts(&embedder, &["x".to_string()]) {
        Err(EncoderError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn wrong_dimension_and_count_are_rejected() {
    let (url, _) = serve(Box::new(|_, _| (200, json!({"embeddings": [[1.0, 2.0, 3.0]]}).to_string())));
    let embedder = HttpEmbedder::with_api_key(profile(&url), None);
    assert!(matches!(
        embed_texts(&embedder, &["x".to_string()]),
        Err(EncoderError::DimensionMismatch { expected: 2, got: 3 })
    ));
    assert!(matches!(
        embed_texts(&embedder, &["x".to_string(), "y".to_string()]),
        Err(EncoderError::CountMismatch { .. })
    ));
}

#[test]
fn garbage_body_is_a_decode_error() {
    let (url, _) = serve(Box::new(|_, _| (200, "not json".into())));
    let embedder = HttpEmbedder::with_api_key(profile(&url), None);
    assert!(matches!(
        embedder.embed_batch(&["x".to_string()]),
        Err(EncoderError::Decode(_))
    ));
}

fn candidates() -> Vec<Candidate> {
    [("a", 0.9, 0.1), ("b", 0.5, 0.8), ("c", 0.1, 0.3)]
        .iter()
        .map(|&(id, s, g)| Candidate {
            doc_id: id.into(),
            title: String::new(),
            snippet: format!("text of {id}"),
            scores: ModalityScores {
                semantic: s,
                lexical: 0.2,
                graph: g,
            },
            hybrid_score: (s + 0.2 + g) / 3.0,
        })
        .collect()
}

#[test]
fn chat_client_drives_weights_rerank() {
    let (url, seen) = serve(Box::new(|_, _| {
        let content = "Weights: {\"semantic\": 0, \"lexical\": 0, \"graph\": 1}";
        (200, json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
    }));
    let client =
        ChatCompletionsClient::with_api_key(&url, "gpt-4o", Duration::from_secs(5), 2, Some("k".into()));
    let reranker = Reranker::new(&client, RerankMode::Weights, PromptSettings::default(), ModalityWeights::equal());
    let outcome = reranker.rerank("which?", &candidates());
    assert!(outcome.fallback.is_none());
    let order: Vec<&str> = outcome.ranked.iter().map(|r| r.doc_id.as_str()).collect();
    assert_eq!(order, ["b", "c", "a"]);

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer k"));
    assert_eq!(seen[0].body["model"], "gpt-4o");
    assert_eq!(seen[0].body["temperature"], 0.0);
    let prompt = seen[0].body["messages"][1]["content"].as_str().unwrap();
    assert!(prompt.contains("which?") && prompt.contains("text of c"));
}

#[test]
fn unreachable_chat_endpoint_falls_back_to_pre_rank() {
    // Bind then drop to get a port nothing listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = ChatCompletionsClient::with_api_key(
        &format!("http://127.0.0.1:{port}"),
        "m",
        Duration::from_secs(2),
        2,
        None,
    );
    let reranker = Reranker::new(&client, RerankMode::Listwise, PromptSettings::default(), ModalityWeights::equal());
    let outcome = reranker.rerank("q", &candidates());
    let reason = outcome.fallback.expect("fallback recorded");
    assert!(reason.contains("2 attempt"), "{reason}");
    let order: Vec<&str> = outcome.ranked.iter().map(|r| r.doc_id.as_str()).collect();
    assert_eq!(order, ["a", "b", "c"]);

    let err = trimodal_core::rerank::LlmClient::complete(
        &client,
        &trimodal_core::rerank::RerankRequest {
            query: "q",
            candidates: &[],
            mode: RerankMode::Weights,
            prompt: String::new(),
        },
    )
    .unwrap_err();
    assert!(matches!(err, LlmError::Transport { attempts: 2, .. }));
}
