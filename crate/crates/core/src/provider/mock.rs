//! Deterministic rule-based stand-in for an LLM.
//!
//! Routing is by prompt sentinel. The mock reads only the slots it needs
//! (the in-game text, the history profiles, the strategy and candidate
//! block) and answers with simple lexical rules, so identical prompts always
//! yield identical text.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde_json::Value;

use super::{CompletionProvider, CompletionRequest, ProviderError, ProviderErrorClass};
use crate::data::LANGUAGE_NONE;
use crate::prompts::PromptKind;
use crate::rerank::{CANDIDATE_BLOCK_END, CANDIDATE_BLOCK_START, CANDIDATE_ID_PREFIX};
use crate::text::words;

const PROFILE_TEXT_START: &str = "list format: \n";
const PROFILE_LANGUAGE_LINE: &str = "\nThe game's language is: ";
const RERANK_STRATEGY_START: &str = "Here is the user's personalized ranking strategy:\n";
const RERANK_STRATEGY_END: &str = "\n\nHere is the game profile information for the games to be ranked:";
const RERANK_LENGTH_MARKER: &str = "MUST be top ";

/// Genre name to the keywords that signal it, in priority order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreLexicon {
    entries: Vec<(String, Vec<String>)>,
}

impl GenreLexicon {
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Self {
        Self { entries }
    }

    pub fn genres(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(g, _)| g.as_str())
    }

    pub fn keywords(&self, genre: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(g, _)| g == genre)
            .map(|(_, k)| k.as_slice())
    }

    /// Keyword hits per genre, in lexicon order.
    pub fn count(&self, text: &str) -> Vec<(&str, usize)> {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for w in words(text) {
            *freq.entry(w).or_default() += 1;
        }
        self.entries
            .iter()
            .map(|(g, kws)| {
                let n = kws.iter().map(|k| freq.get(k.as_str()).copied().unwrap_or(0)).sum();
                (g.as_str(), n)
            })
            .collect()
    }

    /// Most frequent genre; earlier lexicon entries win ties. `None` on no hits.
    pub fn dominant(&self, text: &str) -> Option<&str> {
        let counts = self.count(text);
        let best = counts.iter().map(|&(_, n)| n).max().unwrap_or(0);
        (best > 0)
            .then(|| counts.into_iter().find(|&(_, n)| n == best).map(|(g, _)| g))
            .flatten()
    }
}

impl Default for GenreLexicon {
    fn default() -> Self {
        let e = |g: &str, ks: &[&str]| (g.to_string(), ks.iter().map(|k| k.to_string()).collect());
        Self::new(vec![
            e("obby", &["obby", "obstacle", "parkour"]),
            e("simulator", &["simulator", "simulation"]),
            e("adventure", &["adventure", "quest", "explore", "exploration"]),
            e("role-playing", &["role-playing", "roleplay", "rp"]),
            e("tycoon", &["tycoon"]),
        ])
    }
}

const ENGLISH: &[&str] = &[
    "the", "and", "to", "of", "you", "your", "is", "a", "in", "for", "with", "on", "it", "are",
];
const POLISH: &[&str] = &[
    "i", "w", "z", "na", "się", "do", "jest", "nie", "po", "za", "aby", "oraz", "twój", "twoje", "ze",
];
const SPANISH: &[&str] = &[
    "el", "la", "los", "las", "de", "y", "que", "en", "para", "con", "tu", "es", "del",
];

/// Function words plus the fixed vocabulary of the prompts and of the
/// mock's own strategy text. Excluded from keyword extraction and overlap.
const STOPWORDS: &[&str] = &[
    "the", "and", "to", "of", "you", "your", "is", "a", "an", "in", "for", "with", "on", "it",
    "are", "be", "at", "by", "or", "as", "this", "that", "these", "those", "from", "all", "can",
    "will", "get", "has", "have", "not", "but", "its", "our", "we", "us", "my", "me", "into",
    "out", "up", "more", "most", "than", "then", "them", "they", "their", "there", "here", "each",
    "any", "now", "new", "just", "also", "very", "so", "if", "no", "yes", "do", "does", "did",
    "game", "games", "player", "players", "play", "playing", "played", "user", "user's", "users",
    "based", "preferences", "preference", "ranking", "logic", "prioritize", "follows", "priority",
    "top", "high", "medium", "other", "especially", "titles", "title", "returns", "often",
    "recent", "similar", "strategy", "rank", "following", "information", "profile",
];

fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w) || POLISH.contains(&w) || SPANISH.contains(&w)
}

fn detect_language(text: &str) -> &'static str {
    let mut scores = [("English", 0usize), ("Polish", 0), ("Spanish", 0)];
    for w in words(text) {
        for (i, list) in [ENGLISH, POLISH, SPANISH].iter().enumerate() {
            if list.contains(&w.as_str()) {
                scores[i].1 += 1;
            }
        }
    }
    let best = scores.iter().map(|s| s.1).max().unwrap_or(0);
    scores.iter().find(|s| s.1 == best).map_or("English", |s| s.0)
}

/// Up to `n` content words by frequency, first appearance breaking ties.
fn top_keywords(text: &str, n: usize) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    let mut freq: HashMap<String, usize> = HashMap::new();
    for w in words(text) {
        if w.chars().count() < 4 || is_stopword(&w) || w.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        let e = freq.entry(w.clone()).or_default();
        if *e == 0 {
            order.push(w);
        }
        *e += 1;
    }
    let mut ranked: Vec<(usize, usize, String)> = order
        .into_iter()
        .enumerate()
        .map(|(i, w)| (freq[&w], i, w))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(n).map(|(_, _, w)| w).collect()
}

const EXTRA_CONTENT: &[&str] = &[
    "update", "updates", "event", "events", "exclusive", "season", "seasonal", "vip", "pass",
    "gamepass", "robux", "limited", "bonus", "reward", "rewards",
];

fn audience(genre: &str) -> &'static str {
    match genre {
        "obby" => "kids, teens, casual players",
        "simulator" => "teens, simulation fans",
        "adventure" => "all ages, explorers",
        "role-playing" => "teens, social players",
        "tycoon" => "kids, teens, strategy fans",
        _ => "all ages",
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let s = text.find(start)? + start.len();
    let e = text[s..].rfind(end).map(|e| s + e)?;
    Some(&text[s..e])
}

/// The deterministic mock. Output is a pure function of the prompt.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    lexicon: GenreLexicon,
}

impl MockProvider {
    pub fn new(lexicon: GenreLexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &GenreLexicon {
        &self.lexicon
    }

    fn profile(&self, prompt: &str) -> String {
        let text = between(prompt, PROFILE_TEXT_START, PROFILE_LANGUAGE_LINE).unwrap_or(prompt);
        let declared = prompt
            .rfind(PROFILE_LANGUAGE_LINE)
            .map(|p| &prompt[p + PROFILE_LANGUAGE_LINE.len()..])
            .and_then(|rest| rest.lines().next())
            .map(str::trim)
            .unwrap_or(LANGUAGE_NONE);

        let genre = self.lexicon.dominant(text).unwrap_or("casual");
        let language = if declared.is_empty() || declared.eq_ignore_ascii_case(LANGUAGE_NONE) {
            detect_language(text)
        } else {
            declared
        };
        let keywords = top_keywords(text, 6);
        let extras: Vec<String> = {
            let mut seen = HashSet::new();
            words(text)
                .filter(|w| EXTRA_CONTENT.contains(&w.as_str()) && seen.insert(w.clone()))
                .collect()
        };
        let n_words = words(text).count();
        let scale = match n_words {
            0..=49 => "small: a short experience with a few stages",
            50..=199 => "medium: several areas or stages to complete",
            _ => "large: an extensive world with many stages and activities",
        };
        let about = if keywords.is_empty() {
            format!("A {genre} game with little in-game text.")
        } else {
            format!("A {genre} game centered on {}.", keywords[..keywords.len().min(3)].join(", "))
        };

        let mut obj = serde_json::Map::new();
        let mut put = |k: &str, v: String| {
            obj.insert(k.to_string(), Value::String(v));
        };
        put("game_about", about);
        put("game_genre", genre.to_string());
        put("suitable_for", audience(genre).to_string());
        put(
            "features",
            if keywords.is_empty() {
                "basic controls".to_string()
            } else {
                keywords.join(", ")
            },
        );
        put(
            "includes",
            if extras.is_empty() {
                "standard content".to_string()
            } else {
                extras.join(", ")
            },
        );
        put("game_language", language.to_string());
        put("game_scale", scale.to_string());
        serde_json::to_string_pretty(&Value::Object(obj)).expect("json")
    }

    fn strategy(&self, prompt: &str) -> String {
        // genre frequencies over the embedded history profiles
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut seen = 0usize;
        for line in prompt.lines() {
            let (Some(open), Some(close)) = (line.find('{'), line.rfind('}')) else {
                continue;
            };
            if close < open {
                continue;
            }
            let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&line[open..=close]) else {
                continue;
            };
            if let Some(Value::String(g)) = obj.get("game_genre") {
                let e = counts.entry(g.to_lowercase()).or_insert((0, seen));
                e.0 += 1;
                seen += 1;
            }
        }
        let mut ranked: Vec<(String, usize, usize)> =
            counts.into_iter().map(|(g, (n, first))| (g, n, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

        let mut out = String::from(
            "Based on the user's preferences, the ranking logic will prioritize games as follows:\n\n",
        );
        match ranked.as_slice() {
            [] => out.push_str("1. Top Priority:\n- Games similar to the user's recent play.\n"),
            [first] => {
                out.push_str(&format!(
                    "1. Top Priority:\n- {g} games, especially {g} titles the user returns to most often.\n\n",
                    g = first.0
                ));
                out.push_str("2. Medium Priority:\n- Other games.\n");
            }
            [first, second, ..] => {
                out.push_str(&format!(
                    "1. Top Priority:\n- {g} games, especially {g} titles the user returns to most often.\n\n",
                    g = first.0
                ));
                out.push_str(&format!("2. High Priority:\n- {} games.\n\n", second.0));
                out.push_str("3. Medium Priority:\n- Other games.\n");
            }
        }
        out
    }

    fn rerank(&self, prompt: &str) -> Result<String, ProviderError> {
        let malformed = |d: &str| ProviderError::new(ProviderErrorClass::MalformedResponse, d);
        let strategy = between(prompt, RERANK_STRATEGY_START, RERANK_STRATEGY_END).unwrap_or("");
        let block = between(prompt, CANDIDATE_BLOCK_START, CANDIDATE_BLOCK_END)
            .ok_or_else(|| malformed("rerank prompt without candidate block"))?;
        let wanted = prompt
            .find(RERANK_LENGTH_MARKER)
            .map(|p| &prompt[p + RERANK_LENGTH_MARKER.len()..])
            .and_then(|rest| rest.split_whitespace().next())
            .and_then(|n| n.parse::<usize>().ok());

        let strategy_terms: Vec<String> = words(strategy).filter(|w| !is_stopword(w)).collect();

        let mut candidates: Vec<(String, String)> = Vec::new();
        for line in block.lines() {
            if let Some(id) = line.strip_prefix(CANDIDATE_ID_PREFIX) {
                candidates.push((id.trim().to_string(), String::new()));
            } else if let Some((_, body)) = candidates.last_mut() {
                body.push_str(line);
                body.push('\n');
            }
        }

        let mut scored: Vec<(usize, usize, &str)> = candidates
            .iter()
            .enumerate()
            .map(|(pos, (id, body))| {
                let vocab: HashSet<String> = words(body).collect();
                let score = strategy_terms.iter().filter(|t| vocab.contains(*t)).count();
                (score, pos, id.as_str())
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let take = wanted.unwrap_or(scored.len());
        Ok(scored
            .iter()
            .take(take)
            .map(|(_, _, id)| *id)
            .collect::<Vec<_>>()
            .join("\n"))
    }
}

impl CompletionProvider for MockProvider {
    fn model_name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.validate()?;
        match PromptKind::detect(&request.prompt) {
            Some(PromptKind::GameProfile) => Ok(self.profile(&request.prompt)),
            Some(PromptKind::UserStrategy) => Ok(self.strategy(&request.prompt)),
            Some(PromptKind::Rerank) => self.rerank(&request.prompt),
            None => Err(ProviderError::new(
                ProviderErrorClass::MalformedResponse,
                "no prompt sentinel found",
            )),
        }
    }
}
