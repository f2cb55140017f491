use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::Deserialize;

use super::{FailureReason, VlmPort, VlmQuery, VlmRequest, VlmResult};
use crate::config::VlmConfig;

/// Counting gate limiting concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Deserialize)]
struct GenerateResponse {
    response: String,
}

/// Blocking client for an Ollama-style `generate` endpoint.
pub struct HttpVlm {
    cfg: VlmConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl HttpVlm {
    pub fn new(cfg: &VlmConfig) -> Self {
        let timeout = Duration::from_millis(cfg.timeout_ms.max(1));
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        HttpVlm { cfg: cfg.clone(), agent, gate: Gate::new(cfg.max_in_flight) }
    }

    pub fn endpoint(&self) -> &str {
        &self.cfg.endpoint
    }

    fn send(&self, req: &VlmRequest) -> Result<String, (FailureReason, String)> {
        let body = serde_json::json!({
            "model": req.model_name,
            "prompt": req.prompt,
            "images": [base64::engine::general_purpose::STANDARD.encode(&req.image_jpeg)],
            "stream": false,
        });
        let resp = self.agent.post(&self.cfg.endpoint).send_json(body).map_err(classify)?;
        let text = resp
            .into_string()
            .map_err(|e| (classify_io(&e), e.to_string()))?;
        let parsed: GenerateResponse = serde_json::from_str(&text)
            .map_err(|e| (FailureReason::MalformedResponse, e.to_string()))?;
        Ok(parsed.response)
    }
}

fn classify_io(e: &std::io::Error) -> FailureReason {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => FailureReason::Timeout,
        std::io::ErrorKind::ConnectionRefused => FailureReason::ConnectionRefused,
        _ => FailureReason::MalformedResponse,
    }
}

fn classify(e: ureq::Error) -> (FailureReason, String) {
    let msg = e.to_string();
    match e {
        ureq::Error::Status(code, _) => (FailureReason::HttpStatus, format!("status {code}")),
        ureq::Error::Transport(t) => {
            let lower = msg.to_lowercase();
            let reason = if lower.contains("timed out") || lower.contains("timeout") {
                FailureReason::Timeout
            } else if t.kind() == ureq::ErrorKind::Io {
                // Read timeouts surface as io errors with varying wording.
                if lower.contains("would block") || lower.contains("resource temporarily") {
                    FailureReason::Timeout
                } else {
                    FailureReason::ConnectionRefused
                }
            } else {
                FailureReason::ConnectionRefused
            };
            (reason, msg)
        }
    }
}

impl VlmPort for HttpVlm {
    fn query(&self, query: VlmQuery<'_>) -> VlmResult {
        let start = Instant::now();
        let req = match VlmRequest::from_roi(query.roi, &self.cfg) {
            Ok(r) => r,
            Err(reason) => return VlmResult::failure(reason, None, 0.0),
        };
        let _slot = self.gate.acquire();
        let out = self.send(&req);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        match out {
            Ok(text) => VlmResult::success(text, ms),
            Err((reason, detail)) => VlmResult::failure(reason, Some(detail), ms),
        }
    }
}
