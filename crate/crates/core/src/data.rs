//! Corpus domain types, line-delimited loading and referential integrity.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

/// Longest initial ranking list the pipeline accepts.
pub const MAX_RANKING_LEN: usize = 250;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("dangling references in {context}: {}", ids.join(", "))]
    DanglingReference { context: String, ids: Vec<String> },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("invalid record: {0}")]
    Invalid(String),
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Result<Self, DataError> {
                let raw = raw.into();
                if raw.is_empty() {
                    return Err(DataError::Invalid(concat!("empty ", $what).into()));
                }
                if raw.chars().any(char::is_whitespace) {
                    return Err(DataError::Invalid(format!(concat!($what, " {:?} contains whitespace"), raw)));
                }
                Ok(Self(raw))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = DataError;
            fn try_from(raw: String) -> Result<Self, DataError> {
                Self::new(raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Opaque game identifier: nonempty, no whitespace.
    GameId,
    "game id"
);
string_id!(
    /// Opaque user identifier: nonempty, no whitespace.
    UserId,
    "user id"
);

/// Category of an in-game text element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextKind {
    Instruction,
    Background,
    Button,
    Promo,
    Noise,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextElement {
    pub content: String,
    #[serde(default)]
    pub kind: TextKind,
}

impl TextElement {
    pub fn new(content: impl Into<String>, kind: TextKind) -> Self {
        Self {
            content: content.into(),
            kind,
        }
    }
}

/// Declared language value meaning "unknown, infer from text".
pub const LANGUAGE_NONE: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub id: GameId,
    pub title: String,
    pub description: String,
    pub declared_language: String,
    pub in_game_text: Vec<TextElement>,
}

/// The seven-field structured game profile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameProfile {
    pub game_about: String,
    pub game_genre: String,
    pub suitable_for: String,
    pub features: String,
    pub includes: String,
    pub game_language: String,
    pub game_scale: String,
}

impl GameProfile {
    pub const KEYS: [&'static str; 7] = [
        "game_about",
        "game_genre",
        "suitable_for",
        "features",
        "includes",
        "game_language",
        "game_scale",
    ];

    /// Field values in [`Self::KEYS`] order.
    pub fn values(&self) -> [&str; 7] {
        [
            &self.game_about,
            &self.game_genre,
            &self.suitable_for,
            &self.features,
            &self.includes,
            &self.game_language,
            &self.game_scale,
        ]
    }

    /// Compact single-line JSON object with keys in schema order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub game_id: GameId,
    pub sessions: u32,
    pub playtime_seconds: f64,
}

/// A user's pre-aggregated play history over the last seven days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayHistory {
    pub user_id: UserId,
    pub entries: Vec<HistoryEntry>,
}

impl PlayHistory {
    pub fn history_length(&self) -> usize {
        self.entries.len()
    }
}

/// A user's initial ordered candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingList {
    pub user_id: UserId,
    pub items: Vec<GameId>,
}

impl RankingList {
    /// Builds a list, rejecting duplicates and lists longer than [`MAX_RANKING_LEN`].
    pub fn new(user_id: UserId, items: Vec<GameId>) -> Result<Self, DataError> {
        let list = Self { user_id, items };
        list.check()?;
        Ok(list)
    }

    fn check(&self) -> Result<(), DataError> {
        if self.items.len() > MAX_RANKING_LEN {
            return Err(DataError::Invalid(format!(
                "ranking for {} has {} items (max {MAX_RANKING_LEN})",
                self.user_id,
                self.items.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.items.len());
        for id in &self.items {
            if !seen.insert(id) {
                return Err(DataError::DuplicateId {
                    kind: "ranking item",
                    id: format!("{} in ranking of {}", id, self.user_id),
                });
            }
        }
        Ok(())
    }

    /// The first `min(k, len)` items.
    pub fn top_k(&self, k: usize) -> &[GameId] {
        &self.items[..k.min(self.items.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementLabel {
    pub user_id: UserId,
    pub game_id: GameId,
    pub post_exposure_playtime_seconds: f64,
}

/// File locations of the four corpus collections.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub games: PathBuf,
    pub histories: PathBuf,
    pub rankings: PathBuf,
    pub labels: PathBuf,
}

impl CorpusPaths {
    /// Standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            games: dir.join("games.jsonl"),
            histories: dir.join("histories.jsonl"),
            rankings: dir.join("rankings.jsonl"),
            labels: dir.join("labels.jsonl"),
        }
    }
}

/// All four collections with every id cross-reference resolved.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Corpus {
    games: Vec<GameRecord>,
    histories: Vec<PlayHistory>,
    rankings: Vec<RankingList>,
    labels: Vec<EngagementLabel>,
    game_index: HashMap<GameId, usize>,
    history_index: HashMap<UserId, usize>,
    ranking_index: HashMap<UserId, usize>,
    label_index: HashMap<(UserId, GameId), f64>,
}

impl PartialEq for Corpus {
    /// Indexes are derived from the records, so only the records are compared.
    fn eq(&self, other: &Self) -> bool {
        self.games == other.games
            && self.histories == other.histories
            && self.rankings == other.rankings
            && self.labels == other.labels
    }
}

impl Corpus {
    pub fn new(
        games: Vec<GameRecord>,
        histories: Vec<PlayHistory>,
        rankings: Vec<RankingList>,
        labels: Vec<EngagementLabel>,
    ) -> Result<Self, DataError> {
        let mut game_index = HashMap::with_capacity(games.len());
        for (i, g) in games.iter().enumerate() {
            if game_index.insert(g.id.clone(), i).is_some() {
                return Err(DataError::DuplicateId {
                    kind: "game",
                    id: g.id.to_string(),
                });
            }
            if let Some(pos) = g.in_game_text.iter().position(|e| e.content.is_empty()) {
                return Err(DataError::Invalid(format!(
                    "game {} has empty text element at index {pos}",
                    g.id
                )));
            }
        }

        let mut dangling = BTreeSet::new();
        let mut check = |id: &GameId| {
            if !game_index.contains_key(id) {
                dangling.insert(id.to_string());
            }
        };

        let mut history_index = HashMap::with_capacity(histories.len());
        for (i, h) in histories.iter().enumerate() {
            if history_index.insert(h.user_id.clone(), i).is_some() {
                return Err(DataError::DuplicateId {
                    kind: "history user",
                    id: h.user_id.to_string(),
                });
            }
            let mut seen = HashSet::new();
            for e in &h.entries {
                check(&e.game_id);
                if !seen.insert(&e.game_id) {
                    return Err(DataError::DuplicateId {
                        kind: "history entry",
                        id: format!("{} in history of {}", e.game_id, h.user_id),
                    });
                }
                if !(e.playtime_seconds >= 0.0 && e.playtime_seconds.is_finite()) {
                    return Err(DataError::Invalid(format!(
                        "negative or non-finite playtime for {} in history of {}",
                        e.game_id, h.user_id
                    )));
                }
            }
        }

        let mut ranking_index = HashMap::with_capacity(rankings.len());
        for (i, r) in rankings.iter().enumerate() {
            r.check()?;
            if ranking_index.insert(r.user_id.clone(), i).is_some() {
                return Err(DataError::DuplicateId {
                    kind: "ranking user",
                    id: r.user_id.to_string(),
                });
            }
            r.items.iter().for_each(&mut check);
        }

        let mut label_index = HashMap::with_capacity(labels.len());
        for l in &labels {
            check(&l.game_id);
            let t = l.post_exposure_playtime_seconds;
            if !(t >= 0.0 && t.is_finite()) {
                return Err(DataError::Invalid(format!(
                    "negative or non-finite label for ({}, {})",
                    l.user_id, l.game_id
                )));
            }
            if label_index
                .insert((l.user_id.clone(), l.game_id.clone()), t)
                .is_some()
            {
                return Err(DataError::DuplicateId {
                    kind: "label",
                    id: format!("({}, {})", l.user_id, l.game_id),
                });
            }
        }

        if !dangling.is_empty() {
            return Err(DataError::DanglingReference {
                context: "histories/rankings/labels".into(),
                ids: dangling.into_iter().collect(),
            });
        }

        Ok(Self {
            games,
            histories,
            rankings,
            labels,
            game_index,
            history_index,
            ranking_index,
            label_index,
        })
    }

    pub fn games(&self) -> &[GameRecord] {
        &self.games
    }

    pub fn histories(&self) -> &[PlayHistory] {
        &self.histories
    }

    pub fn rankings(&self) -> &[RankingList] {
        &self.rankings
    }

    pub fn labels(&self) -> &[EngagementLabel] {
        &self.labels
    }

    pub fn game(&self, id: &str) -> Option<&GameRecord> {
        self.game_index.get(id).map(|&i| &self.games[i])
    }

    pub fn history(&self, user: &str) -> Option<&PlayHistory> {
        self.history_index.get(user).map(|&i| &self.histories[i])
    }

    pub fn ranking(&self, user: &str) -> Option<&RankingList> {
        self.ranking_index.get(user).map(|&i| &self.rankings[i])
    }

    /// History length for `user`; users without a history record count as 0.
    pub fn history_length(&self, user: &str) -> usize {
        self.history(user).map_or(0, PlayHistory::history_length)
    }

    /// Post-exposure playtime; an absent label means zero engagement.
    pub fn playtime(&self, user: &UserId, game: &GameId) -> f64 {
        self.label_index
            .get(&(user.clone(), game.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Every user id mentioned by a history or a ranking, sorted.
    pub fn user_ids(&self) -> Vec<UserId> {
        let set: BTreeSet<&UserId> = self
            .histories
            .iter()
            .map(|h| &h.user_id)
            .chain(self.rankings.iter().map(|r| &r.user_id))
            .collect();
        set.into_iter().cloned().collect()
    }

    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            games: self.games.len(),
            users: self.user_ids().len(),
            histories: self.histories.len(),
            rankings: self.rankings.len(),
            labels: self.labels.len(),
        }
    }

    /// Writes the four collections back to `paths`.
    pub fn save(&self, paths: &CorpusPaths) -> Result<(), DataError> {
        jsonl::write(&paths.games, &self.games)?;
        jsonl::write(&paths.histories, &self.histories)?;
        jsonl::write(&paths.rankings, &self.rankings)?;
        jsonl::write(&paths.labels, &self.labels)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub games: usize,
    pub users: usize,
    pub histories: usize,
    pub rankings: usize,
    pub labels: usize,
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} games, {} users ({} histories, {} rankings), {} labels",
            self.games, self.users, self.histories, self.rankings, self.labels
        )
    }
}

pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus, DataError> {
    let games = jsonl::read(&paths.games)?;
    let histories = jsonl::read(&paths.histories)?;
    let rankings = jsonl::read(&paths.rankings)?;
    let labels = jsonl::read(&paths.labels)?;
    Corpus::new(games, histories, rankings, labels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum ValidationWarning {
    EmptyInGameText { game_id: GameId },
    EmptyHistory { user_id: UserId },
    ShortRanking { user_id: UserId, len: usize, requested: usize },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyInGameText { game_id } => write!(f, "{game_id}: empty in-game text"),
            Self::EmptyHistory { user_id } => write!(f, "{user_id}: empty history"),
            Self::ShortRanking {
                user_id,
                len,
                requested,
            } => write!(f, "{user_id}: ranking has {len} items, fewer than {requested}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Reports degenerate records; never fails.
pub fn validate_corpus(corpus: &Corpus, requested_k: usize) -> ValidationReport {
    let mut warnings = Vec::new();
    for g in corpus.games() {
        if g.in_game_text.is_empty() {
            warnings.push(ValidationWarning::EmptyInGameText {
                game_id: g.id.clone(),
            });
        }
    }
    for user in corpus.user_ids() {
        if corpus.history_length(user.as_str()) == 0 {
            warnings.push(ValidationWarning::EmptyHistory {
                user_id: user.clone(),
            });
        }
        if let Some(r) = corpus.ranking(user.as_str()) {
            if r.items.len() < requested_k {
                warnings.push(ValidationWarning::ShortRanking {
                    user_id: user.clone(),
                    len: r.items.len(),
                    requested: requested_k,
                });
            }
        }
    }
    ValidationReport { warnings }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        p
    }

    fn minimal_files(dir: &Path, ranking: &str) -> CorpusPaths {
        CorpusPaths {
            games: write_lines(
                dir,
                "games.jsonl",
                &[
                    r#"{"id":"g1","title":"A","description":"a","declared_language":"English","in_game_text":[{"content":"jump","kind":"button"}]}"#,
                    r#"{"id":"g2","title":"B","description":"b","declared_language":"NONE","in_game_text":[{"content":"hello"}]}"#,
                ],
            ),
            histories: write_lines(
                dir,
                "histories.jsonl",
                &[r#"{"user_id":"u1","entries":[{"game_id":"g1","sessions":2,"playtime_seconds":120.0}]}"#],
            ),
            rankings: write_lines(dir, "rankings.jsonl", &[ranking]),
            labels: write_lines(dir, "labels.jsonl", &[]),
        }
    }

    #[test]
    fn loads_minimal_consistent_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let paths = minimal_files(dir.path(), r#"{"user_id":"u1","items":["g2","g1"]}"#);
        let corpus = load_corpus(&paths).unwrap();
        let s = corpus.summary();
        assert_eq!((s.games, s.users, s.rankings, s.labels), (2, 1, 1, 0));
        // untagged element defaults to unknown
        assert_eq!(corpus.game("g2").unwrap().in_game_text[0].kind, TextKind::Unknown);
        assert_eq!(corpus.playtime(&uid("u1"), &gid("g1")), 0.0);
    }

    #[test]
    fn dangling_reference_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let paths = minimal_files(dir.path(), r#"{"user_id":"u1","items":["g1","gX"]}"#);
        match load_corpus(&paths) {
            Err(DataError::DanglingReference { ids, .. }) => assert_eq!(ids, vec!["gX".to_string()]),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = minimal_files(dir.path(), r#"{"user_id":"u1","items":["g1"]}"#);
        paths.labels = write_lines(
            dir.path(),
            "labels.jsonl",
            &[
                r#"{"user_id":"u1","game_id":"g1","post_exposure_playtime_seconds":5}"#,
                r#"{"user_id":"u1","game_id":"#,
            ],
        );
        let err = load_corpus(&paths).unwrap_err();
        assert!(err.to_string().contains("labels.jsonl:2:"), "{err}");
    }

    #[test]
    fn duplicate_game_id_rejected() {
        let games = vec![game("g1", &["a"]), game("g1", &["b"])];
        assert!(matches!(
            Corpus::new(games, vec![], vec![], vec![]),
            Err(DataError::DuplicateId { kind: "game", .. })
        ));
    }

    #[test]
    fn whitespace_ids_rejected() {
        assert!(GameId::new("g 1").is_err());
        assert!(UserId::new("").is_err());
        let parsed: Result<RankingList, _> = serde_json::from_str(r#"{"user_id":"u 1","items":[]}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn validation_flags_degenerate_records() {
        let games = vec![game("g1", &["a"]), game("g2", &[])];
        let histories = vec![
            PlayHistory {
                user_id: uid("u1"),
                entries: vec![HistoryEntry {
                    game_id: gid("g1"),
                    sessions: 1,
                    playtime_seconds: 10.0,
                }],
            },
            PlayHistory {
                user_id: uid("u2"),
                entries: vec![],
            },
        ];
        let rankings = vec![
            RankingList::new(uid("u1"), vec![gid("g1"), gid("g2")]).unwrap(),
            RankingList::new(uid("u2"), vec![gid("g2"), gid("g1")]).unwrap(),
        ];
        let corpus = Corpus::new(games, histories, rankings, vec![]).unwrap();

        assert!(validate_corpus(&corpus, 2)
            .warnings
            .iter()
            .all(|w| !matches!(w, ValidationWarning::ShortRanking { .. })));
        let report = validate_corpus(&corpus, 2);
        assert_eq!(
            report.warnings,
            vec![
                ValidationWarning::EmptyInGameText { game_id: gid("g2") },
                ValidationWarning::EmptyHistory { user_id: uid("u2") },
            ]
        );
        assert_eq!(report.warnings[0].to_string(), "g2: empty in-game text");
        let report = validate_corpus(&corpus, 3);
        assert_eq!(report.warnings.len(), 4);
    }

    #[test]
    fn consistent_corpus_validates_clean() {
        let games = vec![game("g1", &["a"])];
        let histories = vec![PlayHistory {
            user_id: uid("u1"),
            entries: vec![HistoryEntry {
                game_id: gid("g1"),
                sessions: 1,
                playtime_seconds: 1.0,
            }],
        }];
        let rankings = vec![RankingList::new(uid("u1"), vec![gid("g1")]).unwrap()];
        let corpus = Corpus::new(games, histories, rankings, vec![]).unwrap();
        assert!(validate_corpus(&corpus, 1).is_empty());
    }

    #[test]
    fn top_k_clamps() {
        let r = RankingList::new(uid("u"), vec![gid("a"), gid("b"), gid("c")]).unwrap();
        assert_eq!(r.top_k(2), &[gid("a"), gid("b")]);
        assert_eq!(r.top_k(30).len(), 3);
        assert!(r.top_k(0).is_empty());
    }

    #[test]
    fn save_then_load_round_trips() {
        let games = vec![
            game("g1", &["jump over the lava"]),
            GameRecord {
                declared_language: LANGUAGE_NONE.into(),
                ..game("g2", &["witaj w grze"])
            },
        ];
        let histories = vec![PlayHistory {
            user_id: uid("u1"),
            entries: vec![HistoryEntry {
                game_id: gid("g2"),
                sessions: 3,
                playtime_seconds: 1234.5,
            }],
        }];
        let rankings = vec![RankingList::new(uid("u1"), vec![gid("g2"), gid("g1")]).unwrap()];
        let labels = vec![EngagementLabel {
            user_id: uid("u1"),
            game_id: gid("g1"),
            post_exposure_playtime_seconds: 61.25,
        }];
        let corpus = Corpus::new(games, histories, rankings, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = CorpusPaths::in_dir(dir.path());
        corpus.save(&paths).unwrap();
        let back = load_corpus(&paths).unwrap();
        assert_eq!(back.games(), corpus.games());
        assert_eq!(back.histories(), corpus.histories());
        assert_eq!(back.rankings(), corpus.rankings());
        assert_eq!(back.labels(), corpus.labels());
    }

    proptest! {
        #[test]
        fn ranking_lists_never_hold_duplicates(raw in proptest::collection::vec(0u8..20, 0..40)) {
            let items: Vec<GameId> = raw.iter().map(|n| gid(&format!("g{n}"))).collect();
            let distinct = items.iter().collect::<HashSet<_>>().len() == items.len();
            match RankingList::new(uid("u"), items) {
                Ok(list) => {
                    prop_assert!(distinct);
                    prop_assert_eq!(list.items.iter().collect::<HashSet<_>>().len(), list.items.len());
                }
                Err(_) => prop_assert!(!distinct),
            }
        }
    }
}
