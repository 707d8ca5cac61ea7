//! A mock that corrupts its own answers on a seeded schedule.
//!
//! Rerank answers get duplicated, hallucinated or dropped ids, or come back
//! empty; profile answers get truncated JSON, missing keys, blank values or
//! plain prose. Used to drive every repair and retry path.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;

use super::{CompletionProvider, CompletionRequest, MockProvider, ProviderError};
use crate::prompts::PromptKind;
use crate::rng;

/// When to corrupt a response.
#[derive(Debug, Clone, PartialEq)]
pub enum FaultSchedule {
    Never,
    Always,
    /// Corrupt the first `n` calls seen for each distinct prompt.
    FirstCalls(usize),
    /// Corrupt with this probability, decided by `(prompt, seed)`.
    Rate(f64),
    /// Corrupt every prompt containing the needle.
    WhenPromptContains(String),
}

#[derive(Debug)]
pub struct AdversarialMock {
    inner: MockProvider,
    schedule: FaultSchedule,
    calls: Mutex<HashMap<u64, usize>>,
}

impl AdversarialMock {
    pub fn new(inner: MockProvider, schedule: FaultSchedule) -> Self {
        Self {
            inner,
            schedule,
            calls: Mutex::new(HashMap::new()),
        }
    }

    fn prompt_key(prompt: &str) -> u64 {
        rng::derive_seed(0, &[prompt])
    }

    fn should_corrupt(&self, request: &CompletionRequest) -> bool {
        match &self.schedule {
            FaultSchedule::Never => false,
            FaultSchedule::Always => true,
            FaultSchedule::FirstCalls(n) => {
                let mut calls = self.calls.lock().expect("call counter poisoned");
                let c = calls.entry(Self::prompt_key(&request.prompt)).or_default();
                *c += 1;
                *c <= *n
            }
            FaultSchedule::Rate(p) => {
                let mut r = rng::stream(request.seed, &["adversarial", &request.prompt]);
                r.random::<f64>() < *p
            }
            FaultSchedule::WhenPromptContains(needle) => request.prompt.contains(needle.as_str()),
        }
    }

    fn corrupt_rerank(clean: &str, r: &mut impl Rng) -> String {
        let ids: Vec<&str> = clean.lines().collect();
        match r.random_range(0..6) {
            0 => String::new(),
            1 => {
                // duplicates
                let mut out: Vec<&str> = Vec::new();
                for id in &ids {
                    out.push(id);
                    if r.random_bool(0.4) {
                        out.push(id);
                    }
                }
                out.join(", ")
            }
            2 => {
                // hallucinated ids interleaved
                let mut out: Vec<String> = Vec::new();
                for (i, id) in ids.iter().enumerate() {
                    if r.random_bool(0.3) {
                        out.push(format!("g_hallucinated_{i}"));
                    }
                    out.push(id.to_string());
                }
                out.join("\n")
            }
            3 => {
                // dropped ids, numbered list
                ids.iter()
                    .filter(|_| r.random_bool(0.6))
                    .enumerate()
                    .map(|(i, id)| format!("{}. {id}", i + 1))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            4 => "I'm sorry, I cannot produce a ranking for these games.".to_string(),
            _ => {
                // everything at once, wrapped in broken JSON
                let mut out: Vec<String> = ids.iter().rev().map(|s| format!("\"{s}\"")).collect();
                if let Some(first) = out.first().cloned() {
                    out.push(first);
                }
                out.insert(out.len() / 2, "\"unknown_game\"".into());
                out.truncate(out.len().saturating_sub(2));
                format!("[{}", out.join(", "))
            }
        }
    }

    fn corrupt_profile(clean: &str, r: &mut impl Rng) -> String {
        match r.random_range(0..5) {
            0 => {
                let mut cut = clean.len() / 2;
                while !clean.is_char_boundary(cut) {
                    cut -= 1;
                }
                clean[..cut].to_string()
            }
            1 => {
                let mut v: serde_json::Value = serde_json::from_str(clean).expect("mock emits json");
                v.as_object_mut().expect("object").remove("game_scale");
                format!("```json\n{v}\n```")
            }
            2 => {
                let mut v: serde_json::Value = serde_json::from_str(clean).expect("mock emits json");
                v["game_genre"] = serde_json::Value::String("   ".into());
                v.to_string()
            }
            3 => "This game looks fun, but I could not summarize it.".to_string(),
            _ => clean.replace('}', ""),
        }
    }
}

impl CompletionProvider for AdversarialMock {
    fn model_name(&self) -> &str {
        "mock-adversarial"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let clean = self.inner.complete(request)?;
        if !self.should_corrupt(request) {
            return Ok(clean);
        }
        let mut r = rng::stream(request.seed, &["adversarial-fault", &request.prompt]);
        Ok(match PromptKind::detect(&request.prompt) {
            Some(PromptKind::Rerank) => Self::corrupt_rerank(&clean, &mut r),
            Some(PromptKind::GameProfile) => Self::corrupt_profile(&clean, &mut r),
            _ => String::new(),
        })
    }
}
