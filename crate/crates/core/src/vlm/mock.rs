use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a JPEG payload; the mock's lookup key.
pub fn image_key(jpeg: &[u8]) -> String {
    Sha256::digest(jpeg).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockResponse {
    Text(String),
    /// Reply with this HTTP status and an empty body.
    Status(u16),
    /// 200 with a body that is not the expected JSON.
    Malformed,
    /// Sleep, then answer with the text. Used to provoke client timeouts.
    Delayed(Duration, String),
}

struct Shared {
    table: Mutex<HashMap<String, MockResponse>>,
    default: Mutex<MockResponse>,
    requests: AtomicUsize,
    stop: AtomicBool,
}

/// Local stand-in for a model server: canned answers keyed by image hash,
/// with a request counter.
pub struct MockVlmServer {
    endpoint: String,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl MockVlmServer {
    pub fn start(default: MockResponse) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0")
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server not bound to ip"))?;
        let shared = Arc::new(Shared {
            table: Mutex::new(HashMap::new()),
            default: Mutex::new(default),
            requests: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let worker = Arc::clone(&shared);
        let handle = std::thread::spawn(move || serve(server, worker));
        Ok(MockVlmServer {
            endpoint: format!("http://{addr}/api/generate"),
            shared,
            handle: Some(handle),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn respond_to(&self, key: impl Into<String>, resp: MockResponse) {
        self.shared.table.lock().unwrap().insert(key.into(), resp);
    }

    pub fn set_default(&self, resp: MockResponse) {
        *self.shared.default.lock().unwrap() = resp;
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockVlmServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(server: tiny_http::Server, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::SeqCst) {
        let mut req = match server.recv_timeout(Duration::from_millis(20)) {
            Ok(Some(r)) => r,
            Ok(None) => continue,
            Err(_) => break,
        };
        shared.requests.fetch_add(1, Ordering::SeqCst);
        let mut body = String::new();
        let resp = if req.as_reader().read_to_string(&mut body).is_err() {
            MockResponse::Status(400)
        } else {
            match request_key(&body) {
                Some(key) => {
                    let table = shared.table.lock().unwrap();
                    match table.get(&key) {
                        Some(r) => r.clone(),
                        None => shared.default.lock().unwrap().clone(),
                    }
                }
                None => MockResponse::Status(400),
            }
        };
        let _ = match resp {
            MockResponse::Text(t) => req.respond(json_reply(&t)),
            MockResponse::Delayed(d, t) => {
                std::thread::sleep(d);
                req.respond(json_reply(&t))
            }
            MockResponse::Status(code) => req.respond(tiny_http::Response::empty(code)),
            MockResponse::Malformed => {
                req.respond(tiny_http::Response::from_string("{\"resp\": 12"))
            }
        };
    }
}

fn json_reply(text: &str) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let body = serde_json::json!({ "response": text, "done": true }).to_string();
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
        .expect("static header");
    tiny_http::Response::from_string(body).with_header(header)
}

fn request_key(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.get("model")?.as_str()?;
    v.get("prompt")?.as_str()?;
    let b64 = v.get("images")?.as_array()?.first()?.as_str()?;
    let jpeg = base64::engine::general_purpose::STANDARD.decode(b64).ok()?;
    Some(image_key(&jpeg))
}
