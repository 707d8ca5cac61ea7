//! Small lexical helpers shared by the mock provider and id scanning.

/// Lowercased word tokens. Letters, digits, `-` and `_` form words; a
/// leading or trailing `-` is trimmed.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .map(|w| w.trim_matches('-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// True when `needle` occurs in `haystack` delimited by non-word characters.
pub fn contains_token(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let at = start + pos;
        let end = at + needle.len();
        let before_ok = haystack[..at].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return true;
        }
        start = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_keep_hyphenated_terms() {
        let w: Vec<_> = words("Role-Playing, OBBY! -x- 2x_cash").collect();
        assert_eq!(w, ["role-playing", "obby", "x", "2x_cash"]);
    }

    #[test]
    fn token_containment_respects_boundaries() {
        assert!(contains_token("played g12 a lot", "g12"));
        assert!(!contains_token("played g123 a lot", "g12"));
        assert!(!contains_token("xg12", "g12"));
        assert!(contains_token("(g12)", "g12"));
        assert!(contains_token("ąg1 g1", "g1"));
    }
}
