use super::lexicon::{AliasMap, LexiconKind};

/// Values a model uses to say "nothing found".
const ABSENT: &[&str] = &["", "none", "n/a", "na", "null", "nil", "unknown", "not found", "not mentioned", "-"];

fn strip_once(s: &str) -> &str {
    s.trim()
        .trim_start_matches(['$', '#', '*', '"', '\'', '`'])
        .trim_end_matches(|c: char| !c.is_alphanumeric())
        .trim()
}

/// Lowercases, collapses whitespace and strips `$`/`#` prefixes, quotes and
/// trailing punctuation, repeating until nothing changes.
pub(crate) fn clean(raw: &str) -> String {
    let mut s = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let next = strip_once(&s).split_whitespace().collect::<Vec<_>>().join(" ");
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Canonical form of an extracted coin or exchange name. Idempotent.
/// Both kinds share one alias table.
pub fn normalize_entity(raw: &str, _kind: LexiconKind, aliases: &AliasMap) -> String {
    let s = clean(raw);
    aliases.resolve(&s).to_string()
}

/// Like [`normalize_entity`], mapping "none"-style answers and empty input
/// to `None`.
pub fn normalize_optional(raw: Option<&str>, kind: LexiconKind, aliases: &AliasMap) -> Option<String> {
    let s = normalize_entity(raw?, kind, aliases);
    if ABSENT.contains(&s.as_str()) { None } else { Some(s) }
}
