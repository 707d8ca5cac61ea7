//! Seeded synthetic corpus with known latent preferences.
//!
//! Games get a genre and a quality; their in-game text embeds genre keywords
//! in instruction and background elements, while buttons, promotions and
//! noise elements carry no genre signal. Users get a softmax preference over
//! genres, a history drawn in proportion to it, a baseline ranking that is
//! the true affinity order disturbed by random adjacent swaps, and
//! post-exposure playtime labels that are a fixed function of the latent
//! variables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    Corpus, CorpusPaths, DataError, EngagementLabel, GameId, GameRecord, HistoryEntry, PlayHistory, RankingList,
    TextElement, TextKind, UserId, LANGUAGE_NONE,
};
use crate::jsonl::{self, JsonlError};
use crate::rerank::MAX_RERANK_K;
use crate::rng;

/// File written next to the corpus files.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

/// Users whose relative preference for a genre is below this never play it.
pub const LABEL_THRESHOLD: f64 = 0.35;
/// Playtime of a perfect-quality game in the user's favourite genre.
pub const MAX_LABEL_MINUTES: f64 = 240.0;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Store(#[from] JsonlError),
}

/// Share of users whose history length is drawn uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthBand {
    pub share: f64,
    pub min: usize,
    pub max: usize,
}

impl LengthBand {
    pub fn mean(&self) -> f64 {
        (self.min + self.max) as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_games: usize,
    pub n_users: usize,
    pub genres: Vec<String>,
    /// Disjoint length ranges with means 4, 14 and 44 over a 30/40/30 split,
    /// so the percentile cohorts line up with the bands.
    pub history_length_profile: Vec<LengthBand>,
    /// Fraction of each game's text elements that are noise.
    pub noise_fraction: f64,
    /// Preferences are `softmax(sharpness * z)` with standard normal `z`.
    pub preference_sharpness: f64,
    pub ranking_length: usize,
    /// Random adjacent swaps applied to each baseline ranking, per item.
    pub baseline_swaps_per_item: f64,
    /// Fraction of games written in Polish with an undeclared language.
    pub secondary_language_fraction: f64,
    /// Number of users (taken from the shortest band) with an empty history.
    pub empty_history_users: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_games: 1000,
            n_users: 300,
            genres: ["obby", "simulator", "adventure", "role-playing", "tycoon"]
                .map(String::from)
                .to_vec(),
            history_length_profile: vec![
                LengthBand { share: 0.3, min: 1, max: 7 },
                LengthBand { share: 0.4, min: 8, max: 20 },
                LengthBand { share: 0.3, min: 30, max: 58 },
            ],
            noise_fraction: 0.2,
            preference_sharpness: 3.0,
            ranking_length: 100,
            baseline_swaps_per_item: 60.0,
            secondary_language_fraction: 0.1,
            empty_history_users: 0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_games == 0 || self.n_users == 0 {
            return bad("n_games and n_users must be at least 1".into());
        }
        if self.genres.is_empty() || self.genres.iter().any(|g| g.trim().is_empty()) {
            return bad("genres must be nonempty strings".into());
        }
        if self.genres.iter().collect::<BTreeSet<_>>().len() != self.genres.len() {
            return bad("duplicate genre".into());
        }
        for (name, f) in [
            ("noise_fraction", self.noise_fraction),
            ("secondary_language_fraction", self.secondary_language_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must be in [0,1], got {f}"));
            }
        }
        if self.noise_fraction >= 1.0 {
            return bad("noise_fraction must leave room for signal text".into());
        }
        if !(self.preference_sharpness >= 0.0 && self.preference_sharpness.is_finite()) {
            return bad("preference_sharpness must be finite and nonnegative".into());
        }
        if !(self.baseline_swaps_per_item >= 0.0 && self.baseline_swaps_per_item.is_finite()) {
            return bad("baseline_swaps_per_item must be finite and nonnegative".into());
        }
        if self.ranking_length == 0 || self.ranking_length > crate::data::MAX_RANKING_LEN {
            return bad(format!("ranking_length must be in 1..={}", crate::data::MAX_RANKING_LEN));
        }
        if self.history_length_profile.is_empty() {
            return bad("history_length_profile is empty".into());
        }
        let total: f64 = self.history_length_profile.iter().map(|b| b.share).sum();
        if (total - 1.0).abs() > 1e-9 || self.history_length_profile.iter().any(|b| b.share < 0.0) {
            return bad(format!("history band shares must be nonnegative and sum to 1, got {total}"));
        }
        for b in &self.history_length_profile {
            if b.min == 0 || b.min > b.max {
                return bad(format!("history band {}..={} is invalid", b.min, b.max));
            }
            if b.max > self.n_games {
                return bad(format!("history length {} exceeds n_games {}", b.max, self.n_games));
            }
        }
        if self.empty_history_users > self.n_users {
            return bad("empty_history_users exceeds n_users".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTruth {
    pub game_id: GameId,
    pub genre: String,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: UserId,
    pub preference: BTreeMap<String, f64>,
}

/// One line of the ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TruthRecord {
    User(UserTruth),
    Game(GameTruth),
}

/// Latent variables behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub users: BTreeMap<UserId, UserTruth>,
    pub games: BTreeMap<GameId, GameTruth>,
}

impl GroundTruth {
    /// Post-exposure playtime in seconds the user spends on the game. Zero
    /// for unknown users or games.
    pub fn expected_engagement(&self, user: &UserId, game: &GameId) -> f64 {
        let (Some(u), Some(g)) = (self.users.get(user), self.games.get(game)) else {
            return 0.0;
        };
        label_seconds(&u.preference, &g.genre, g.quality)
    }

    pub fn save(&self, path: &Path) -> Result<(), JsonlError> {
        let records: Vec<TruthRecord> = self
            .users
            .values()
            .cloned()
            .map(TruthRecord::User)
            .chain(self.games.values().cloned().map(TruthRecord::Game))
            .collect();
        jsonl::write(path, &records)
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let mut truth = Self::default();
        for r in jsonl::read::<TruthRecord>(path)? {
            match r {
                TruthRecord::User(u) => {
                    truth.users.insert(u.user_id.clone(), u);
                }
                TruthRecord::Game(g) => {
                    truth.games.insert(g.game_id.clone(), g);
                }
            }
        }
        Ok(truth)
    }
}

fn label_seconds(preference: &BTreeMap<String, f64>, genre: &str, quality: f64) -> f64 {
    let max = preference.values().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    let rel = preference.get(genre).copied().unwrap_or(0.0) / max;
    if rel < LABEL_THRESHOLD {
        return 0.0;
    }
    (60.0 * MAX_LABEL_MINUTES * rel * rel * quality).round()
}

/// Candidates sorted by expected engagement, descending; ties keep input order.
pub fn oracle_rerank(candidates: &[GameId], truth: &GroundTruth, user: &UserId) -> Vec<GameId> {
    let mut scored: Vec<(f64, &GameId)> = candidates
        .iter()
        .map(|g| (truth.expected_engagement(user, g), g))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, g)| g.clone()).collect()
}

/// Words that carry a genre in generated text.
fn genre_keywords(genre: &str) -> Vec<String> {
    let extra: &[&str] = match genre {
        "obby" => &["obstacle", "parkour"],
        "simulator" => &["simulation"],
        "adventure" => &["quest", "explore"],
        "role-playing" => &["roleplay", "rp"],
        _ => &[],
    };
    std::iter::once(genre.to_string()).chain(extra.iter().map(|s| s.to_string())).collect()
}

fn title_word(genre: &str) -> String {
    match genre {
        "role-playing" => "Roleplay".to_string(),
        g => {
            let mut c = g.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        }
    }
}

struct Phrases {
    instructions: &'static [&'static str],
    background: &'static [&'static str],
    buttons: &'static [&'static str],
    promos: &'static [&'static str],
    noise: &'static [&'static str],
}

const ENGLISH: Phrases = Phrases {
    instructions: &[
        "Complete the {kw} stages to earn coins.",
        "Reach the end of the {kw} before the timer runs out.",
        "Press E to start your {kw} run.",
        "Follow the arrows to finish the {kw} course.",
        "Collect every gem hidden in the {kw} area.",
    ],
    background: &[
        "Welcome to the greatest {kw} world ever built.",
        "Long ago, heroes began their {kw} in this valley.",
        "This {kw} was made by a small team of friends.",
    ],
    buttons: &["Play", "Shop", "Settings", "Inventory", "Close", "Respawn", "Back"],
    promos: &[
        "Buy the VIP pass for 2x coins!",
        "Join our group for a free reward.",
        "Limited offer: 50% off gems today.",
        "Like the server to unlock a secret pet.",
    ],
    noise: &[
        "lol",
        "afk brb",
        "gg",
        "Player123 joined the server",
        "asdfgh",
        "Server restarting soon",
        "Loading...",
        "ok ok ok",
    ],
};

const POLISH: Phrases = Phrases {
    instructions: &[
        "Ukończ wszystkie etapy {kw}, aby zdobyć monety.",
        "Dotrzyj do końca {kw} zanim skończy się czas.",
        "Naciśnij E i zacznij swój {kw} teraz.",
    ],
    background: &["Witaj w najlepszym świecie {kw} na serwerze.", "To jest {kw} dla ciebie i twoich znajomych."],
    buttons: &["Graj", "Sklep", "Ustawienia", "Zamknij"],
    promos: &["Kup przepustkę VIP i zdobądź podwójne monety!", "Dołącz do grupy po darmową nagrodę."],
    noise: &["hej", "lol", "nie wiem", "Ładowanie..."],
};

const ADJECTIVES: &[&str] = &["Mega", "Super", "Epic", "Tiny", "Ultimate", "Crazy", "Legendary", "Happy", "Frozen", "Neon"];
const NOUNS: &[&str] = &["Island", "Kingdom", "Factory", "City", "Tower", "Galaxy", "Farm", "Castle", "Jungle", "Arena"];

fn fill(template: &str, kw: &str) -> String {
    template.replace("{kw}", kw)
}

fn make_game(id: GameId, genre: &str, polish: bool, noise_fraction: f64, r: &mut ChaCha8Rng) -> GameRecord {
    let phrases = if polish { &POLISH } else { &ENGLISH };
    let keywords = genre_keywords(genre);
    let pick_kw = |r: &mut ChaCha8Rng| keywords.choose(r).expect("nonempty").clone();

    let mut signal: Vec<TextElement> = Vec::new();
    for _ in 0..r.random_range(2..=4) {
        let t = phrases.instructions.choose(r).expect("nonempty");
        let kw = pick_kw(r);
        signal.push(TextElement::new(fill(t, &kw), TextKind::Instruction));
    }
    for _ in 0..r.random_range(1..=2) {
        let t = phrases.background.choose(r).expect("nonempty");
        let kw = pick_kw(r);
        signal.push(TextElement::new(fill(t, &kw), TextKind::Background));
    }
    for _ in 0..r.random_range(2..=4) {
        let b = phrases.buttons.choose(r).expect("nonempty");
        signal.push(TextElement::new(*b, TextKind::Button));
    }
    for _ in 0..r.random_range(1..=2) {
        let p = phrases.promos.choose(r).expect("nonempty");
        signal.push(TextElement::new(*p, TextKind::Promo));
    }
    let n_noise = (noise_fraction / (1.0 - noise_fraction) * signal.len() as f64).round() as usize;
    for _ in 0..n_noise {
        let n = phrases.noise.choose(r).expect("nonempty");
        signal.push(TextElement::new(*n, TextKind::Noise));
    }
    signal.shuffle(r);

    let adjective = ADJECTIVES.choose(r).expect("nonempty");
    let noun = NOUNS.choose(r).expect("nonempty");
    let title = if r.random_bool(0.5) {
        format!("{adjective} {noun} {}", title_word(genre))
    } else {
        format!("{adjective} {noun}")
    };
    let description = if r.random_bool(0.6) {
        format!("A {genre} experience made by Studio {}.", r.random_range(1..100))
    } else {
        "Play with friends and have fun!".to_string()
    };
    GameRecord {
        id,
        title,
        description,
        declared_language: if polish { LANGUAGE_NONE.to_string() } else { "English".to_string() },
        in_game_text: signal,
    }
}

fn softmax(z: &[f64], s: f64) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (s * (v - m)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Users per length band; rounding leftovers go to the last band.
fn band_sizes(spec: &SynthSpec) -> Vec<usize> {
    let mut sizes: Vec<usize> = spec
        .history_length_profile
        .iter()
        .map(|b| (b.share * spec.n_users as f64).round() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    let last = sizes.len() - 1;
    if assigned > spec.n_users {
        let mut excess = assigned - spec.n_users;
        for s in sizes.iter_mut().rev() {
            let take = excess.min(*s);
            *s -= take;
            excess -= take;
        }
    } else {
        sizes[last] += spec.n_users - assigned;
    }
    sizes
}

/// Generates a corpus and its ground truth. Identical specs give identical output.
pub fn generate(spec: &SynthSpec) -> Result<(Corpus, GroundTruth), SynthError> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, &["synth"]);
    let gwidth = (spec.n_games - 1).to_string().len().max(4);
    let uwidth = (spec.n_users - 1).to_string().len().max(3);

    let mut games = Vec::with_capacity(spec.n_games);
    let mut truth = GroundTruth::default();
    let mut by_genre: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..spec.n_games {
        let id = GameId::new(format!("g{i:0gwidth$}"))?;
        let genre = &spec.genres[if i < spec.genres.len() { i } else { r.random_range(0..spec.genres.len()) }];
        let quality = r.random_range(0.2..1.0);
        let polish = r.random_bool(spec.secondary_language_fraction);
        games.push(make_game(id.clone(), genre, polish, spec.noise_fraction, &mut r));
        by_genre.entry(genre.as_str()).or_default().push(i);
        truth.games.insert(
            id.clone(),
            GameTruth {
                game_id: id,
                genre: genre.clone(),
                quality,
            },
        );
    }

    let sizes = band_sizes(spec);
    let mut lengths: Vec<usize> = Vec::with_capacity(spec.n_users);
    for (band, &n) in spec.history_length_profile.iter().zip(&sizes) {
        for _ in 0..n {
            lengths.push(r.random_range(band.min..=band.max));
        }
    }
    lengths.shuffle(&mut r);
    // empty histories replace the shortest ones
    let mut by_len: Vec<usize> = (0..lengths.len()).collect();
    by_len.sort_by_key(|&i| (lengths[i], i));
    for &i in by_len.iter().take(spec.empty_history_users) {
        lengths[i] = 0;
    }

    let mut histories = Vec::new();
    let mut rankings = Vec::new();
    let mut labels = Vec::new();
    for (u, &len) in lengths.iter().enumerate() {
        let user_id = UserId::new(format!("u{u:0uwidth$}"))?;
        let z: Vec<f64> = (0..spec.genres.len()).map(|_| r.sample(StandardNormal)).collect();
        let pref = softmax(&z, spec.preference_sharpness);
        let preference: BTreeMap<String, f64> = spec.genres.iter().cloned().zip(pref.iter().copied()).collect();

        // history: genre drawn by preference, then an unseen game of that genre
        let mut played: BTreeSet<usize> = BTreeSet::new();
        let mut entries = Vec::with_capacity(len);
        while entries.len() < len {
            let gi = weighted_index(&pref, &mut r);
            let pool: Vec<usize> = by_genre
                .get(spec.genres[gi].as_str())
                .map(|v| v.iter().copied().filter(|g| !played.contains(g)).collect())
                .unwrap_or_default();
            let game = match pool.choose(&mut r) {
                Some(&g) => g,
                None => {
                    let rest: Vec<usize> = (0..spec.n_games).filter(|g| !played.contains(g)).collect();
                    *rest.choose(&mut r).expect("history length is at most n_games")
                }
            };
            played.insert(game);
            let t = &truth.games[&games[game].id];
            let rel = preference[&t.genre] / pref.iter().copied().fold(0.0, f64::max);
            let u_noise: f64 = r.random_range(0.5..1.5);
            entries.push(HistoryEntry {
                game_id: games[game].id.clone(),
                sessions: 1 + (9.0 * rel * r.random::<f64>()).floor() as u32,
                playtime_seconds: (60.0 * (5.0 + 115.0 * rel * t.quality * u_noise)).round(),
            });
        }
        if len > 0 {
            histories.push(PlayHistory {
                user_id: user_id.clone(),
                entries,
            });
        }

        // baseline: true affinity order of unseen games, then adjacent swaps
        let mut unseen: Vec<usize> = (0..spec.n_games).filter(|g| !played.contains(g)).collect();
        unseen.shuffle(&mut r);
        unseen.truncate(spec.ranking_length);
        let affinity = |g: usize| {
            let t = &truth.games[&games[g].id];
            preference[&t.genre] * t.quality
        };
        unseen.sort_by(|&a, &b| affinity(b).total_cmp(&affinity(a)).then(a.cmp(&b)));
        let swaps = (spec.baseline_swaps_per_item * unseen.len() as f64).round() as usize;
        if unseen.len() > 1 {
            for _ in 0..swaps {
                let i = r.random_range(0..unseen.len() - 1);
                unseen.swap(i, i + 1);
            }
        }
        let items: Vec<GameId> = unseen.iter().map(|&g| games[g].id.clone()).collect();
        for g in items.iter().take(MAX_RERANK_K) {
            let t = &truth.games[g];
            labels.push(EngagementLabel {
                user_id: user_id.clone(),
                game_id: g.clone(),
                post_exposure_playtime_seconds: label_seconds(&preference, &t.genre, t.quality),
            });
        }
        rankings.push(RankingList::new(user_id.clone(), items)?);
        truth.users.insert(user_id.clone(), UserTruth { user_id, preference });
    }

    let corpus = Corpus::new(games, histories, rankings, labels)?;
    Ok((corpus, truth))
}

fn weighted_index(weights: &[f64], r: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = r.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Generates and writes the four corpus files plus the ground truth to `dir`.
pub fn write_synthetic(spec: &SynthSpec, dir: &Path) -> Result<(Corpus, GroundTruth), SynthError> {
    let (corpus, truth) = generate(spec)?;
    corpus.save(&CorpusPaths::in_dir(dir))?;
    truth.save(&dir.join(GROUND_TRUTH_FILE))?;
    Ok((corpus, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ndcg_engagement, segment_users, RelevanceParams, DEFAULT_BANDS};
    use crate::provider::GenreLexicon;
    use crate::text::contains_token;
    use itertools_like::permutations;

    fn small() -> SynthSpec {
        SynthSpec {
            n_games: 120,
            n_users: 40,
            seed: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        for s in [
            SynthSpec { n_games: 0, ..small() },
            SynthSpec { n_users: 0, ..small() },
            SynthSpec { noise_fraction: 1.5, ..small() },
            SynthSpec { genres: vec![], ..small() },
            SynthSpec { n_games: 20, ..small() },
        ] {
            assert!(matches!(generate(&s), Err(SynthError::InvalidSpec(_))), "{s:?}");
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate(&SynthSpec { seed: 4, ..small() }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn genre_keyword_in_signal_text() {
        let (corpus, truth) = generate(&small()).unwrap();
        for g in corpus.games() {
            let genre = &truth.games[&g.id].genre;
            let kws = genre_keywords(genre);
            assert!(
                g.in_game_text
                    .iter()
                    .filter(|e| e.kind != TextKind::Noise)
                    .any(|e| kws.iter().any(|k| contains_token(&e.content, k))),
                "{}",
                g.id
            );
        }
    }

    #[test]
    fn mock_lexicon_recovers_genre() {
        let (corpus, truth) = generate(&small()).unwrap();
        let lex = GenreLexicon::default();
        for g in corpus.games() {
            let text: Vec<&str> = g.in_game_text.iter().map(|e| e.content.as_str()).collect();
            assert_eq!(lex.dominant(&text.join("\n")), Some(truth.games[&g.id].genre.as_str()), "{}", g.id);
        }
    }

    #[test]
    fn secondary_language_games_are_undeclared() {
        let (corpus, _) = generate(&small()).unwrap();
        let undeclared = corpus.games().iter().filter(|g| g.declared_language == LANGUAGE_NONE).count();
        assert!(undeclared > 0 && undeclared < corpus.games().len());
    }

    #[test]
    fn segment_means_track_length_profile() {
        let (corpus, _) = generate(&SynthSpec::default()).unwrap();
        let users: Vec<_> = corpus
            .user_ids()
            .into_iter()
            .map(|u| {
                let l = corpus.history_length(u.as_str());
                (u, l)
            })
            .collect();
        let seg = segment_users(&users, &DEFAULT_BANDS).unwrap();
        for (members, target) in seg.iter().zip([4.0, 14.0, 44.0]) {
            let mean = members.iter().map(|u| corpus.history_length(u.as_str()) as f64).sum::<f64>() / members.len() as f64;
            assert!((mean - target).abs() <= 0.2 * target, "{mean} vs {target}");
        }
    }

    #[test]
    fn empty_history_users_have_rankings_only() {
        let (corpus, _) = generate(&SynthSpec { empty_history_users: 5, ..small() }).unwrap();
        assert_eq!(corpus.histories().len(), 35);
        assert_eq!(corpus.rankings().len(), 40);
    }

    #[test]
    fn oracle_dominates_identity() {
        let (corpus, truth) = generate(&small()).unwrap();
        let params = RelevanceParams::default();
        let (mut oracle, mut identity) = (0.0, 0.0);
        for rl in corpus.rankings() {
            let slice = rl.top_k(30);
            let pt = |g: &GameId| corpus.playtime(&rl.user_id, g);
            identity += ndcg_engagement(slice, pt, &params, 10);
            oracle += ndcg_engagement(&oracle_rerank(slice, &truth, &rl.user_id), pt, &params, 10);
        }
        assert!(oracle >= identity);
        assert!(oracle > identity, "noise swaps should leave headroom");
    }

    #[test]
    fn oracle_is_optimal_by_brute_force() {
        let (corpus, truth) = generate(&small()).unwrap();
        let params = RelevanceParams::default();
        for rl in corpus.rankings().iter().take(20) {
            let slice = &rl.items[..6];
            let pt = |g: &GameId| truth.expected_engagement(&rl.user_id, g);
            let best = permutations(slice)
                .iter()
                .map(|p| ndcg_engagement(p, pt, &params, 6))
                .fold(0.0, f64::max);
            let got = ndcg_engagement(&oracle_rerank(slice, &truth, &rl.user_id), pt, &params, 6);
            assert!((best - got).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_preferences_order_by_quality() {
        let mut truth = GroundTruth::default();
        let u = UserId::new("u").unwrap();
        truth.users.insert(
            u.clone(),
            UserTruth {
                user_id: u.clone(),
                preference: [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into(),
            },
        );
        for (id, genre, q) in [("x", "a", 0.3), ("y", "b", 0.9), ("z", "a", 0.6)] {
            let g = GameId::new(id).unwrap();
            truth.games.insert(g.clone(), GameTruth { game_id: g, genre: genre.into(), quality: q });
        }
        let ids: Vec<GameId> = ["x", "y", "z"].iter().map(|s| GameId::new(*s).unwrap()).collect();
        let order: Vec<_> = oracle_rerank(&ids, &truth, &u).iter().map(|g| g.to_string()).collect();
        assert_eq!(order, ["y", "z", "x"]);
        assert_eq!(oracle_rerank(&ids[..1], &truth, &u), ids[..1]);
    }

    #[test]
    fn ground_truth_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (_, truth) = write_synthetic(&small(), dir.path()).unwrap();
        assert_eq!(GroundTruth::load(&dir.path().join(GROUND_TRUTH_FILE)).unwrap(), truth);
        crate::data::load_corpus(&CorpusPaths::in_dir(dir.path())).unwrap();
    }

    mod itertools_like {
        /// All orderings of `items` (small inputs only).
        pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.to_vec();
                let head = rest.remove(i);
                for mut p in permutations(&rest) {
                    p.insert(0, head.clone());
                    out.push(p);
                }
            }
            out
        }
    }
}
