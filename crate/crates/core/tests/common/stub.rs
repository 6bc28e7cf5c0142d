//! In-process stand-in for the encoder service, speaking just enough HTTP/1.1
//! for the blocking client.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    /// `/encode` and `/score` drop the last element of the response.
    DropLast,
    /// `/score` answers 1.5 for every pair.
    OutOfRange,
    /// Every route answers 503.
    Unavailable,
}

pub const DIM: usize = 4;

/// Documented stub embedding: character count, vowel count, space count, 1.
pub fn stub_vector(text: &str) -> Vec<f64> {
    let vowels = text.chars().filter(|c| "aeiouAEIOU".contains(*c)).count();
    let spaces = text.chars().filter(|c| *c == ' ').count();
    vec![text.chars().count() as f64, vowels as f64, spaces as f64, 1.0]
}

/// Documented stub relevance: share of query words that occur in the snippet.
pub fn stub_score(query: &str, snippet: &str) -> f64 {
    let snippet: Vec<String> = snippet.split_whitespace().map(str::to_lowercase).collect();
    let words: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        return 0.0;
    }
    words.iter().filter(|w| snippet.contains(w)).count() as f64 / words.len() as f64
}

pub struct Stub {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn spawn(mode: Mode) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            counter.fetch_add(1, Ordering::SeqCst);
            thread::spawn(move || handle(stream, mode));
        }
    });
    Stub { url, requests }
}

fn handle(stream: TcpStream, mode: Mode) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let (status, reply) = route(mode, method, path, &body);
    let text = reply.to_string();
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
}

fn route(mode: Mode, method: &str, path: &str, body: &Value) -> (u16, Value) {
    if mode == Mode::Unavailable {
        return (503, json!({"error": "model loading"}));
    }
    match (method, path) {
        ("GET", "/health") => (200, json!({"status": "ok", "model": "stub", "dimension": DIM})),
        ("POST", "/encode") => {
            let texts: Vec<&str> =
                body["texts"].as_array().map_or(vec![], |a| a.iter().filter_map(Value::as_str).collect());
            if texts.is_empty() {
                return (400, json!({"error": "empty batch"}));
            }
            let mut vectors: Vec<Vec<f64>> = texts.iter().map(|t| stub_vector(t)).collect();
            if mode == Mode::DropLast {
                vectors.pop();
            }
            (200, json!({"vectors": vectors, "dimension": DIM}))
        }
        ("POST", "/score") => {
            let pairs = body["pairs"].as_array().cloned().unwrap_or_default();
            if pairs.is_empty() {
                return (400, json!({"error": "empty batch"}));
            }
            let mut scores: Vec<f64> = pairs
                .iter()
                .map(|p| {
                    if mode == Mode::OutOfRange {
                        1.5
                    } else {
                        stub_score(p["query"].as_str().unwrap_or(""), p["snippet"].as_str().unwrap_or(""))
                    }
                })
                .collect();
            if mode == Mode::DropLast {
                scores.pop();
            }
            (200, json!({"scores": scores}))
        }
        _ => (404, json!({"error": "not found"})),
    }
}
