use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FailureReason, VlmPort, VlmQuery, VlmResult};
use crate::detection::name_hash;

/// Answers from known ground truth, exactly with probability `fidelity` and
/// otherwise with one character substituted. Every decision is a pure
/// function of (seed, frame name), so results do not depend on call order.
pub struct GroundTruthVlm {
    truth: HashMap<String, String>,
    fidelity: f64,
    seed: u64,
    calls: AtomicUsize,
}

impl GroundTruthVlm {
    pub fn new(truth: HashMap<String, String>, fidelity: f64, seed: u64) -> Self {
        GroundTruthVlm { truth, fidelity: fidelity.clamp(0.0, 1.0), seed, calls: AtomicUsize::new(0) }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn answer(&self, name: &str, text: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(name_hash(self.seed ^ 0x5e1f, name));
        if text.is_empty() || rng.random::<f64>() < self.fidelity {
            return text.to_string();
        }
        let mut chars: Vec<char> = text.chars().collect();
        let i = rng.random_range(0..chars.len());
        let pool: &[u8] = if chars[i].is_ascii_digit() {
            b"0123456789"
        } else {
            b"ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        };
        let old = chars[i];
        loop {
            let c = pool[rng.random_range(0..pool.len())] as char;
            if c != old {
                chars[i] = c;
                break;
            }
        }
        chars.into_iter().collect()
    }
}

impl VlmPort for GroundTruthVlm {
    fn query(&self, query: VlmQuery<'_>) -> VlmResult {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.truth.get(query.frame_name) {
            Some(text) => VlmResult::success(self.answer(query.frame_name, text), 0.0),
            None => VlmResult::failure(
                FailureReason::MalformedResponse,
                Some(format!("no ground truth for {}", query.frame_name)),
                0.0,
            ),
        }
    }
}
