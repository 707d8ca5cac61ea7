//! Prompt templates and slot rendering.
//!
//! Templates live as plain text files under `prompts/`. Each ends with a
//! sentinel comment naming its family, which is how the mock provider routes
//! a prompt without parsing natural language. Slots are `{name}` tokens;
//! rendering is single-pass, so substituted text is never re-expanded.

use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt template missing: {path}")]
    TemplateMissing { path: PathBuf },
    #[error("prompt template {path} is malformed: {reason}")]
    TemplateInvalid { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    GameProfile,
    UserStrategy,
    Rerank,
}

impl PromptKind {
    pub const ALL: [PromptKind; 3] = [Self::GameProfile, Self::UserStrategy, Self::Rerank];

    pub fn name(self) -> &'static str {
        match self {
            Self::GameProfile => "game_profile",
            Self::UserStrategy => "user_strategy",
            Self::Rerank => "rerank",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::GameProfile => "game_profile.txt",
            Self::UserStrategy => "user_strategy.txt",
            Self::Rerank => "rerank.txt",
        }
    }

    pub fn sentinel(self) -> &'static str {
        match self {
            Self::GameProfile => "<!-- gamerank-prompt: game_profile -->",
            Self::UserStrategy => "<!-- gamerank-prompt: user_strategy -->",
            Self::Rerank => "<!-- gamerank-prompt: rerank -->",
        }
    }

    pub fn slots(self) -> &'static [&'static str] {
        match self {
            Self::GameProfile => &[slot::IN_GAME_TEXT, slot::GAME_LANGUAGE],
            Self::UserStrategy => &[slot::USER_PLAY_HISTORY],
            Self::Rerank => &[slot::RANKING_LENGTH, slot::USER_PROFILE, slot::RANKING_RESULTS],
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            Self::GameProfile => include_str!("../prompts/game_profile.txt"),
            Self::UserStrategy => include_str!("../prompts/user_strategy.txt"),
            Self::Rerank => include_str!("../prompts/rerank.txt"),
        }
    }

    /// The family whose sentinel appears last in `prompt`, if any.
    pub fn detect(prompt: &str) -> Option<PromptKind> {
        Self::ALL
            .into_iter()
            .filter_map(|k| prompt.rfind(k.sentinel()).map(|pos| (pos, k)))
            .max_by_key(|&(pos, _)| pos)
            .map(|(_, k)| k)
    }
}

pub mod slot {
    pub const IN_GAME_TEXT: &str = "in_game_text";
    pub const GAME_LANGUAGE: &str = "game_language";
    pub const USER_PLAY_HISTORY: &str = "user_play_history_str";
    pub const RANKING_LENGTH: &str = "ranking_length";
    pub const USER_PROFILE: &str = "user_profile";
    pub const RANKING_RESULTS: &str = "ranking_results_str";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    text: String,
}

impl PromptTemplate {
    pub fn builtin(kind: PromptKind) -> Self {
        Self {
            kind,
            text: kind.builtin_text().to_string(),
        }
    }

    /// Loads `dir/<kind file>` and checks the sentinel and every slot are present.
    pub fn load(dir: &Path, kind: PromptKind) -> Result<Self, PromptError> {
        let path = dir.join(kind.file_name());
        let text = fs::read_to_string(&path).map_err(|_| PromptError::TemplateMissing {
            path: path.clone(),
        })?;
        if !text.contains(kind.sentinel()) {
            return Err(PromptError::TemplateInvalid {
                path,
                reason: format!("sentinel {:?} not found", kind.sentinel()),
            });
        }
        for s in kind.slots() {
            if !text.contains(&format!("{{{s}}}")) {
                return Err(PromptError::TemplateInvalid {
                    path,
                    reason: format!("slot {{{s}}} not found"),
                });
            }
        }
        Ok(Self { kind, text })
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes `{slot}` tokens named by this template's family. Any other
    /// brace text (the JSON schema, for instance) is copied verbatim.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let slots = self.kind.slots();
        let mut out = String::with_capacity(self.text.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after.find('}').and_then(|close| {
                let name = &after[..close];
                slots
                    .contains(&name)
                    .then(|| values.iter().find(|(k, _)| *k == name))
                    .flatten()
                    .map(|(_, v)| (close, *v))
            });
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// The three templates the pipeline renders.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub game_profile: PromptTemplate,
    pub user_strategy: PromptTemplate,
    pub rerank: PromptTemplate,
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self {
            game_profile: PromptTemplate::builtin(PromptKind::GameProfile),
            user_strategy: PromptTemplate::builtin(PromptKind::UserStrategy),
            rerank: PromptTemplate::builtin(PromptKind::Rerank),
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        Ok(Self {
            game_profile: PromptTemplate::load(dir, PromptKind::GameProfile)?,
            user_strategy: PromptTemplate::load(dir, PromptKind::UserStrategy)?,
            rerank: PromptTemplate::load(dir, PromptKind::Rerank)?,
        })
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_carry_sentinels_and_slots() {
        for kind in PromptKind::ALL {
            let t = PromptTemplate::builtin(kind);
            assert!(t.text().trim_end().ends_with(kind.sentinel()));
            for s in kind.slots() {
                assert_eq!(t.text().matches(&format!("{{{s}}}")).count(), 1, "{s}");
            }
            assert_eq!(PromptKind::detect(t.text()), Some(kind));
        }
        assert_eq!(PromptKind::detect("no marker here"), None);
    }

    #[test]
    fn render_is_single_pass() {
        let t = PromptTemplate::builtin(PromptKind::Rerank);
        let out = t.render(&[
            (slot::USER_PROFILE, "{ranking_length}"),
            (slot::RANKING_LENGTH, "5"),
            (slot::RANKING_RESULTS, "x"),
        ]);
        assert!(out.contains("top 5 game_id list"));
        assert!(out.contains("strategy:\n{ranking_length}\n"));
    }

    #[test]
    fn schema_braces_survive_rendering() {
        let t = PromptTemplate::builtin(PromptKind::GameProfile);
        let out = t.render(&[(slot::IN_GAME_TEXT, ""), (slot::GAME_LANGUAGE, "NONE")]);
        assert!(out.contains("{\n    \"game_about\""));
        assert!(out.contains("The game's language is: NONE\n"));
    }

    #[test]
    fn load_reports_missing_and_malformed_templates() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            PromptSet::from_dir(dir.path()),
            Err(PromptError::TemplateMissing { .. })
        ));
        std::fs::write(dir.path().join("rerank.txt"), "no sentinel {user_profile}").unwrap();
        assert!(matches!(
            PromptTemplate::load(dir.path(), PromptKind::Rerank),
            Err(PromptError::TemplateInvalid { .. })
        ));
        for kind in PromptKind::ALL {
            std::fs::write(dir.path().join(kind.file_name()), kind.builtin_text()).unwrap();
        }
        assert!(PromptSet::from_dir(dir.path()).is_ok());
    }
}
