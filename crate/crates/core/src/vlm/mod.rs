//! Vision-language-model fallback: JPEG transport, response sanitation and
//! the in-process / in-repo stand-ins for a real model server.

mod http;
mod mock;
mod oracle;

pub use http::HttpVlm;
pub use mock::{image_key, MockResponse, MockVlmServer};
pub use oracle::GroundTruthVlm;

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::VlmConfig;
use crate::imaging::io::encode_jpeg;
use crate::imaging::ImageBuffer;

/// What a single model request carries over the wire.
#[derive(Debug, Clone)]
pub struct VlmRequest {
    pub prompt: String,
    pub image_jpeg: Vec<u8>,
    pub model_name: String,
    pub timeout: Duration,
}

impl VlmRequest {
    /// Encodes `roi` at the configured quality.
    pub fn from_roi(roi: &ImageBuffer, cfg: &VlmConfig) -> Result<Self, FailureReason> {
        let image_jpeg = encode_jpeg(roi, cfg.jpeg_quality).map_err(|_| FailureReason::Encode)?;
        let req = VlmRequest {
            prompt: cfg.prompt.clone(),
            image_jpeg,
            model_name: cfg.model.clone(),
            timeout: Duration::from_millis(cfg.timeout_ms),
        };
        if req.image_jpeg.is_empty() || req.timeout.is_zero() {
            return Err(FailureReason::Encode);
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    ConnectionRefused,
    HttpStatus,
    MalformedResponse,
    Encode,
    /// The pipeline wanted a model but none was wired in.
    Unavailable,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FailureReason::Timeout => "timeout",
            FailureReason::ConnectionRefused => "connection refused",
            FailureReason::HttpStatus => "http error status",
            FailureReason::MalformedResponse => "malformed response",
            FailureReason::Encode => "jpeg encoding failed",
            FailureReason::Unavailable => "no vlm configured",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmResult {
    pub raw_text: String,
    pub sanitized: String,
    pub latency_ms: f64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl VlmResult {
    pub fn success(raw_text: String, latency_ms: f64) -> Self {
        let sanitized = sanitize(&raw_text);
        VlmResult { raw_text, sanitized, latency_ms, failed: false, reason: None, detail: None }
    }

    pub fn failure(reason: FailureReason, detail: Option<String>, latency_ms: f64) -> Self {
        VlmResult {
            raw_text: String::new(),
            sanitized: String::new(),
            latency_ms,
            failed: true,
            reason: Some(reason),
            detail,
        }
    }
}

/// A plate image plus the frame it came from. Real models only look at the
/// pixels; the ground-truth stand-in keys on the name.
#[derive(Debug, Clone, Copy)]
pub struct VlmQuery<'a> {
    pub frame_name: &'a str,
    pub roi: &'a ImageBuffer,
}

pub trait VlmPort: Send + Sync {
    /// Never panics on transport problems; those come back as a failed result.
    fn query(&self, query: VlmQuery<'_>) -> VlmResult;
}

/// One-shot HTTP query without keeping a client around.
pub fn query_vlm(roi: &ImageBuffer, endpoint: &str, cfg: &VlmConfig) -> VlmResult {
    let mut cfg = cfg.clone();
    cfg.endpoint = endpoint.to_string();
    HttpVlm::new(&cfg).query(VlmQuery { frame_name: "", roi })
}

fn plate_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[0-9]{3,4}[A-Z]{3}").expect("static regex"))
}

fn remove_country_word(s: &mut String) {
    while let Some(pos) = s.find("BOLIVIA") {
        s.replace_range(pos..pos + "BOLIVIA".len(), "");
    }
}

/// Reduces free-form model output to a plate string over `[0-9A-Z]`.
pub fn sanitize(raw: &str) -> String {
    let mut s = raw.to_uppercase();
    remove_country_word(&mut s);
    let mut s: String = s.chars().filter(|c| c.is_ascii_digit() || c.is_ascii_uppercase()).collect();
    // Stripping punctuation can splice a fresh "BOLIVIA" together ("BOL-IVIA").
    remove_country_word(&mut s);
    // A trailing department letter ("2345KHDL") needs no special case: the
    // leftmost match already stops after three letters.
    match plate_regex().find(&s) {
        Some(m) => m.as_str().to_string(),
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_examples() {
        assert_eq!(sanitize("1234ABC"), "1234ABC");
        assert_eq!(sanitize("The plate is 1234ABC."), "1234ABC");
        assert_eq!(sanitize("BOLIVIA 2345KHD L"), "2345KHD");
        assert_eq!(sanitize("Plate: 987-XYZ ... bolivia"), "987XYZ");
        assert_eq!(sanitize(""), "");
    }

    #[test]
    fn sanitize_without_plate_returns_stripped() {
        assert_eq!(sanitize("I can't read it"), "ICANTREADIT");
        assert_eq!(sanitize("12 ab"), "12AB");
    }

    #[test]
    fn spliced_country_word_is_removed() {
        assert_eq!(sanitize("BOL-IVIA"), "");
        assert_eq!(sanitize("BOLBOLIVIAIVIA 555XYZ"), "555XYZ");
    }

    #[test]
    fn leftmost_plate_wins() {
        assert_eq!(sanitize("111AAA then 2222BBB"), "111AAA");
        // Five digits: the match starts one digit in.
        assert_eq!(sanitize("12345ABC"), "2345ABC");
    }

    #[test]
    fn failure_has_empty_sanitized() {
        let r = VlmResult::failure(FailureReason::Timeout, None, 3.0);
        assert!(r.failed && r.sanitized.is_empty());
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["reason"], "timeout");
    }
}
