//! Game profile generation.
//!
//! A game's in-game text is sampled under the token budget, rendered into the
//! profile prompt, completed, and parsed into a [`GameProfile`]. Parse or
//! schema failures are retried with the same prompt and the next seed.
//! Results are kept in an append-only store keyed by game id and a
//! fingerprint of the game's full aggregated text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::data::{Corpus, GameId, GameProfile, GameRecord};
use crate::jsonl::{self, JsonlError};
use crate::prompts::{slot, PromptTemplate};
use crate::provider::{CompletionProvider, CompletionRequest, ProviderError};
use crate::rng;
use crate::sampler::{aggregate, sample_under_budget, TokenBudget};

/// Misspelling of `suitable_for` accepted on input.
const SUITABLE_FOR_ALIAS: &str = "suitabl_for";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileParseError {
    #[error("parse_failure: no JSON object found")]
    Parse,
    #[error("schema_failure: missing or empty keys: {}", keys.join(", "))]
    Schema { keys: Vec<String> },
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("profile_generation_exhausted for {game_id} after {attempts} attempts: {last}")]
    Exhausted {
        game_id: GameId,
        attempts: u32,
        last: ProfileParseError,
    },
    #[error("provider failed for {game_id}: {source}")]
    Provider {
        game_id: GameId,
        #[source]
        source: ProviderError,
    },
    #[error("{} of {total} games failed profiling ({:.2}% > {:.2}% threshold): {}",
        failures.len(), 100.0 * *rate, 100.0 * *threshold,
        failures.iter().map(|f| f.game_id.as_str()).collect::<Vec<_>>().join(", "))]
    BatchFailed {
        failures: Vec<ProfileFailure>,
        total: usize,
        rate: f64,
        threshold: f64,
    },
    #[error(transparent)]
    Store(#[from] JsonlError),
}

/// Renders the profile prompt: declared language (including the literal
/// `NONE`) and the sampled text go into their slots unchanged.
pub fn build_profile_prompt(template: &PromptTemplate, game: &GameRecord, sampled_text: &str) -> String {
    template.render(&[
        (slot::IN_GAME_TEXT, sampled_text),
        (slot::GAME_LANGUAGE, &game.declared_language),
    ])
}

/// Byte span of the first balanced `{...}` starting at or after `from`,
/// honouring JSON string literals.
fn balanced_object(raw: &str, from: usize) -> Option<(usize, usize)> {
    let bytes = raw.as_bytes();
    let start = from + raw[from..].find('{')?;
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, i + 1));
                }
            }
            _ => {}
        }
    }
    None
}

/// Extracts the first JSON object in `raw` (prose and code fences around it
/// are tolerated) and checks the seven keys hold nonempty strings. Extra
/// keys are ignored.
pub fn parse_profile(raw: &str) -> Result<GameProfile, ProfileParseError> {
    let mut from = 0;
    let obj: Map<String, Value> = loop {
        let Some((s, e)) = balanced_object(raw, from) else {
            return Err(ProfileParseError::Parse);
        };
        if let Ok(Value::Object(map)) = serde_json::from_str(&raw[s..e]) {
            break map;
        }
        from = s + 1;
    };

    let mut missing = Vec::new();
    let mut take = |key: &str| -> String {
        let value = obj.get(key).or_else(|| {
            (key == "suitable_for")
                .then(|| obj.get(SUITABLE_FOR_ALIAS))
                .flatten()
        });
        match value {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            _ => {
                missing.push(key.to_string());
                String::new()
            }
        }
    };
    let profile = GameProfile {
        game_about: take("game_about"),
        game_genre: take("game_genre"),
        suitable_for: take("suitable_for"),
        features: take("features"),
        includes: take("includes"),
        game_language: take("game_language"),
        game_scale: take("game_scale"),
    };
    if missing.is_empty() {
        Ok(profile)
    } else {
        Err(ProfileParseError::Schema { keys: missing })
    }
}

/// Hex SHA-256 of the game's aggregated, unsampled in-game text.
pub fn text_fingerprint(game: &GameRecord) -> String {
    let digest = Sha256::digest(aggregate(&game.in_game_text).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct ProfileSettings {
    pub budget: TokenBudget,
    pub retry_cap: u32,
    pub seed: u64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            budget: TokenBudget::default(),
            retry_cap: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProfile {
    pub profile: GameProfile,
    pub attempts: u32,
}

/// sample → prompt → complete → parse, retrying parse/schema failures up to
/// `retry_cap` completions in total.
pub fn generate_profile(
    game: &GameRecord,
    template: &PromptTemplate,
    provider: &dyn CompletionProvider,
    settings: &ProfileSettings,
) -> Result<GeneratedProfile, ProfileError> {
    let id = game.id.as_str();
    let sampled = sample_under_budget(
        &game.in_game_text,
        &settings.budget,
        rng::derive_seed(settings.seed, &["sampling", id]),
    );
    let prompt = build_profile_prompt(template, game, &aggregate(&sampled));
    let base_seed = rng::derive_seed(settings.seed, &["profile", id]);
    let cap = settings.retry_cap.max(1);

    let mut last = ProfileParseError::Parse;
    for attempt in 1..=cap {
        let request = CompletionRequest::new(prompt.clone(), base_seed.wrapping_add(u64::from(attempt - 1)));
        let raw = provider.complete(&request).map_err(|source| ProfileError::Provider {
            game_id: game.id.clone(),
            source,
        })?;
        match parse_profile(&raw) {
            Ok(profile) => return Ok(GeneratedProfile { profile, attempts: attempt }),
            Err(e) => {
                tracing::debug!(game = id, attempt, error = %e, "profile attempt failed");
                last = e;
            }
        }
    }
    Err(ProfileError::Exhausted {
        game_id: game.id.clone(),
        attempts: cap,
        last,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProfile {
    pub game_id: GameId,
    pub fingerprint: String,
    pub profile: GameProfile,
    pub provider_model: String,
    pub created_at: String,
}

/// Append-only line-delimited profile cache.
#[derive(Debug)]
pub struct ProfileStore {
    path: PathBuf,
    latest: HashMap<GameId, StoredProfile>,
}

impl ProfileStore {
    /// Opens `path`, reading existing entries; a missing file is an empty store.
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let entries: Vec<StoredProfile> = jsonl::read_if_exists(path)?;
        let latest = entries.into_iter().map(|e| (e.game_id.clone(), e)).collect();
        Ok(Self {
            path: path.to_path_buf(),
            latest,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Cached profile for `game` if its fingerprint still matches.
    pub fn get(&self, game: &GameId, fingerprint: &str) -> Option<&GameProfile> {
        self.latest
            .get(game)
            .filter(|e| e.fingerprint == fingerprint)
            .map(|e| &e.profile)
    }

    /// Latest profile for `game` regardless of fingerprint.
    pub fn latest(&self, game: &str) -> Option<&GameProfile> {
        self.latest.get(game).map(|e| &e.profile)
    }

    /// Latest profile per game, ordered by game id.
    pub fn profiles(&self) -> BTreeMap<GameId, GameProfile> {
        self.latest
            .iter()
            .map(|(k, v)| (k.clone(), v.profile.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    pub fn append(&mut self, records: Vec<StoredProfile>) -> Result<(), JsonlError> {
        jsonl::append(&self.path, &records)?;
        for r in records {
            self.latest.insert(r.game_id.clone(), r);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub settings: ProfileSettings,
    /// Ranking prefix length whose games must be profiled.
    pub top_k: usize,
    /// Largest tolerated failure fraction.
    pub failure_threshold: f64,
    pub max_in_flight: usize,
    pub created_at: String,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            settings: ProfileSettings::default(),
            top_k: 30,
            failure_threshold: 0.05,
            max_in_flight: 8,
            created_at: "1970-01-01T00:00:00Z".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileFailure {
    pub game_id: GameId,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    pub profiles: BTreeMap<GameId, GameProfile>,
    pub failures: Vec<ProfileFailure>,
    pub cache_hits: usize,
    pub generated: usize,
}

/// Games referenced by any history or by any ranking's top-k prefix, sorted.
pub fn games_in_scope(corpus: &Corpus, top_k: usize) -> BTreeSet<GameId> {
    corpus
        .histories()
        .iter()
        .flat_map(|h| h.entries.iter().map(|e| e.game_id.clone()))
        .chain(corpus.rankings().iter().flat_map(|r| r.top_k(top_k).iter().cloned()))
        .collect()
}

/// Profiles every in-scope game, reusing fingerprint-matching cache entries.
///
/// New profiles are appended to the store in game-id order even when the
/// batch as a whole fails the threshold.
pub fn profile_corpus(
    corpus: &Corpus,
    template: &PromptTemplate,
    provider: &dyn CompletionProvider,
    store: &mut ProfileStore,
    options: &BatchOptions,
) -> Result<BatchOutcome, ProfileError> {
    let scope = games_in_scope(corpus, options.top_k);
    let mut outcome = BatchOutcome::default();
    let mut todo: Vec<(&GameRecord, String)> = Vec::new();
    for id in &scope {
        let game = corpus.game(id.as_str()).expect("corpus integrity");
        let fp = text_fingerprint(game);
        match store.get(id, &fp) {
            Some(p) => {
                outcome.cache_hits += 1;
                outcome.profiles.insert(id.clone(), p.clone());
            }
            None => todo.push((game, fp)),
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<GeneratedProfile, ProfileError>> = pool.install(|| {
        todo.par_iter()
            .map(|(game, _)| generate_profile(game, template, provider, &options.settings))
            .collect()
    });

    let mut fresh = Vec::new();
    for ((game, fp), result) in todo.iter().zip(results) {
        match result {
            Ok(g) => {
                outcome.generated += 1;
                outcome.profiles.insert(game.id.clone(), g.profile.clone());
                fresh.push(StoredProfile {
                    game_id: game.id.clone(),
                    fingerprint: fp.clone(),
                    profile: g.profile,
                    provider_model: provider.model_name().to_string(),
                    created_at: options.created_at.clone(),
                });
            }
            Err(e) => outcome.failures.push(ProfileFailure {
                game_id: game.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    store.append(fresh)?;

    let total = scope.len();
    let rate = if total == 0 {
        0.0
    } else {
        outcome.failures.len() as f64 / total as f64
    };
    if rate > options.failure_threshold {
        return Err(ProfileError::BatchFailed {
            failures: outcome.failures,
            total,
            rate,
            threshold: options.failure_threshold,
        });
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{game, gid, uid};
    use crate::data::{RankingList, TextElement, TextKind};
    use crate::prompts::PromptKind;
    use crate::provider::{AdversarialMock, FaultSchedule, MockProvider};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn sample_profile() -> GameProfile {
        GameProfile {
            game_about: "A railway simulator set in Poland.".into(),
            game_genre: "simulator".into(),
            suitable_for: "teens, railway enthusiasts".into(),
            features: "multiplayer, track repair".into(),
            includes: "seasonal updates".into(),
            game_language: "Polish".into(),
            game_scale: "large".into(),
        }
    }

    struct Counting<P>(P, AtomicUsize);

    impl<P: CompletionProvider> CompletionProvider for Counting<P> {
        fn model_name(&self) -> &str {
            self.0.model_name()
        }
        fn complete(&self, r: &CompletionRequest) -> Result<String, ProviderError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            self.0.complete(r)
        }
    }

    fn template() -> PromptTemplate {
        PromptTemplate::builtin(PromptKind::GameProfile)
    }

    #[test]
    fn none_language_keeps_inference_instruction() {
        let mut g = game("g1", &["obby"]);
        g.declared_language = "NONE".into();
        let p = build_profile_prompt(&template(), &g, "obby");
        assert!(p.contains("The game's language is: NONE\n"));
        assert!(p.contains("analyze the text to determine the game's language"));
    }

    #[test]
    fn empty_text_still_renders() {
        let p = build_profile_prompt(&template(), &game("g1", &[]), "");
        assert!(p.contains("list format: \n\nThe game's language is: English"));
    }

    #[test]
    fn schema_block_names_each_key_once() {
        let p = build_profile_prompt(&template(), &game("g1", &["x"]), "x");
        let schema = &p[p.find("{\n").unwrap()..];
        for key in GameProfile::KEYS {
            assert_eq!(schema.matches(&format!("\"{key}\":")).count(), 1, "{key}");
        }
    }

    #[test]
    fn parses_exact_and_wrapped_objects() {
        let p = sample_profile();
        assert_eq!(parse_profile(&p.to_json()).unwrap(), p);
        let wrapped = format!("Here you go:\n```json\n{}\n```\nLet me know if you need more.", p.to_json());
        assert_eq!(parse_profile(&wrapped).unwrap(), p);
    }

    #[test]
    fn parses_railway_profile_with_misspelled_key() {
        // key spelling as printed in the published example
        let raw = r#"{"game_about": "This Roblox game appears to be a railway simulator set in Poland, featuring various Polish cities and stations.", "game_genre": "simulator", "suitabl_for": "teens, railway enthusiasts, simulation fans", "features": "multiplayer modes, detailed railway management", "includes": "seasonal updates, special events", "game_language": "Polish", "game_scale": "The game has a large scale with multiple cities and stations."}"#;
        let p = parse_profile(raw).unwrap();
        assert_eq!(p.game_genre, "simulator");
        assert_eq!(p.game_language, "Polish");
        assert_eq!(p.suitable_for, "teens, railway enthusiasts, simulation fans");
    }

    #[test]
    fn classifies_failures() {
        assert_eq!(parse_profile("no json here"), Err(ProfileParseError::Parse));
        assert_eq!(parse_profile("{\"game_about\": \"x\""), Err(ProfileParseError::Parse));
        let mut v = serde_json::to_value(sample_profile()).unwrap();
        v.as_object_mut().unwrap().remove("game_scale");
        v["features"] = Value::String(" ".into());
        assert_eq!(
            parse_profile(&v.to_string()),
            Err(ProfileParseError::Schema {
                keys: vec!["features".into(), "game_scale".into()]
            })
        );
        v["game_scale"] = Value::from(3);
        v["features"] = Value::String("ok".into());
        assert!(matches!(parse_profile(&v.to_string()), Err(ProfileParseError::Schema { .. })));
    }

    #[test]
    fn skips_non_object_braces_before_the_profile() {
        let raw = format!("use {{placeholders}} then {}", sample_profile().to_json());
        assert_eq!(parse_profile(&raw).unwrap(), sample_profile());
    }

    #[test]
    fn extra_keys_ignored() {
        let mut v = serde_json::to_value(sample_profile()).unwrap();
        v["rating"] = Value::from(5);
        assert_eq!(parse_profile(&v.to_string()).unwrap(), sample_profile());
    }

    #[test]
    fn clean_mock_profiles_first_try() {
        let g = game("g1", &["Jump across the obby", "Reach the last checkpoint"]);
        let out = generate_profile(&g, &template(), &MockProvider::default(), &ProfileSettings::default()).unwrap();
        assert_eq!(out.attempts, 1);
        assert_eq!(out.profile.game_genre, "obby");
    }

    #[test]
    fn one_broken_completion_then_success() {
        let g = game("g1", &["Jump across the obby"]);
        let m = AdversarialMock::new(MockProvider::default(), FaultSchedule::FirstCalls(1));
        let out = generate_profile(&g, &template(), &m, &ProfileSettings::default()).unwrap();
        assert_eq!(out.attempts, 2);
    }

    #[test]
    fn always_broken_exhausts_at_cap() {
        let g = game("g1", &["Jump across the obby"]);
        let m = Counting(
            AdversarialMock::new(MockProvider::default(), FaultSchedule::Always),
            AtomicUsize::new(0),
        );
        let settings = ProfileSettings {
            retry_cap: 3,
            ..Default::default()
        };
        let err = generate_profile(&g, &template(), &m, &settings).unwrap_err();
        assert!(matches!(err, ProfileError::Exhausted { attempts: 3, .. }), "{err}");
        assert_eq!(m.1.load(Ordering::SeqCst), 3);
    }

    fn ten_game_corpus() -> Corpus {
        let games: Vec<GameRecord> = (0..10)
            .map(|i| game(&format!("g{i}"), &[&format!("obby stage marker{i}")]))
            .collect();
        let ids = (0..10).map(|i| gid(&format!("g{i}"))).collect();
        Corpus::new(games, vec![], vec![RankingList::new(uid("u1"), ids).unwrap()], vec![]).unwrap()
    }

    #[test]
    fn second_run_is_all_cache_hits() {
        let corpus = ten_game_corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.jsonl");
        let provider = Counting(MockProvider::default(), AtomicUsize::new(0));
        let mut store = ProfileStore::open(&path).unwrap();
        let first = profile_corpus(&corpus, &template(), &provider, &mut store, &BatchOptions::default()).unwrap();
        assert_eq!((first.generated, first.cache_hits), (10, 0));
        let calls = provider.1.load(Ordering::SeqCst);

        let mut reopened = ProfileStore::open(&path).unwrap();
        let second = profile_corpus(&corpus, &template(), &provider, &mut reopened, &BatchOptions::default()).unwrap();
        assert_eq!((second.generated, second.cache_hits), (0, 10));
        assert_eq!(provider.1.load(Ordering::SeqCst), calls);
        assert_eq!(first.profiles, second.profiles);
    }

    #[test]
    fn failure_threshold_controls_batch_outcome() {
        let corpus = ten_game_corpus();
        let bad = AdversarialMock::new(MockProvider::default(), FaultSchedule::WhenPromptContains("marker7".into()));
        let dir = tempfile::tempdir().unwrap();

        let mut store = ProfileStore::open(&dir.path().join("a.jsonl")).unwrap();
        match profile_corpus(&corpus, &template(), &bad, &mut store, &BatchOptions::default()) {
            Err(ProfileError::BatchFailed { failures, .. }) => {
                assert_eq!(failures.len(), 1);
                assert_eq!(failures[0].game_id, gid("g7"));
            }
            other => panic!("expected batch failure, got {other:?}"),
        }
        // successes were still persisted
        assert_eq!(store.len(), 9);

        let mut store = ProfileStore::open(&dir.path().join("b.jsonl")).unwrap();
        let opts = BatchOptions {
            failure_threshold: 0.20,
            ..Default::default()
        };
        let ok = profile_corpus(&corpus, &template(), &bad, &mut store, &opts).unwrap();
        assert_eq!(ok.profiles.len(), 9);
        assert_eq!(ok.failures.len(), 1);
    }

    #[test]
    fn changed_text_invalidates_only_that_game() {
        let corpus = ten_game_corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let mut store = ProfileStore::open(&path).unwrap();
        profile_corpus(&corpus, &template(), &MockProvider::default(), &mut store, &BatchOptions::default()).unwrap();

        let mut games = corpus.games().to_vec();
        games[3].in_game_text.push(TextElement::new("now a tycoon", TextKind::Background));
        let changed = Corpus::new(games, vec![], corpus.rankings().to_vec(), vec![]).unwrap();
        let mut store = ProfileStore::open(&path).unwrap();
        let out = profile_corpus(&changed, &template(), &MockProvider::default(), &mut store, &BatchOptions::default()).unwrap();
        assert_eq!((out.generated, out.cache_hits), (1, 9));
        // append-only: eleven lines on disk
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 11);
    }

    #[test]
    fn fingerprint_ignores_sampling_seed() {
        let g = game("g1", &["a", "b"]);
        assert_eq!(text_fingerprint(&g), text_fingerprint(&g.clone()));
        assert_ne!(text_fingerprint(&g), text_fingerprint(&game("g1", &["a", "c"])));
    }

    fn arb_profile() -> impl Strategy<Value = GameProfile> {
        proptest::collection::vec("[^\u{0}]{0,20}[a-zA-Z0-9][^\u{0}]{0,20}", 7).prop_map(|v| GameProfile {
            game_about: v[0].clone(),
            game_genre: v[1].clone(),
            suitable_for: v[2].clone(),
            features: v[3].clone(),
            includes: v[4].clone(),
            game_language: v[5].clone(),
            game_scale: v[6].clone(),
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_round_trips(p in arb_profile()) {
            prop_assert_eq!(parse_profile(&p.to_json()).unwrap(), p);
        }

        #[test]
        fn parse_is_total(raw in ".{0,300}") {
            let _ = parse_profile(&raw);
        }

        #[test]
        fn parse_is_total_on_json_like_noise(raw in "[{}\\[\\]\":,a-z_ \\\\]{0,200}") {
            let _ = parse_profile(&raw);
        }
    }
}
