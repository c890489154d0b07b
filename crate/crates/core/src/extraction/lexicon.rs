use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use super::ExtractionError;

const DEFAULT_TICKERS: &str = include_str!("../../data/tickers.txt");
const DEFAULT_EXCHANGES: &str = include_str!("../../data/exchanges.txt");
const DEFAULT_ALIASES: &str = include_str!("../../data/aliases.tsv");
const COMMON_WORDS: &str = include_str!("../../data/common_words.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LexiconKind {
    Ticker,
    Exchange,
}

impl LexiconKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LexiconKind::Ticker => "ticker",
            LexiconKind::Exchange => "exchange",
        }
    }
}

/// Set of lowercase names. Ticker entries that are also ordinary English
/// words are flagged as collisions.
#[derive(Debug, Clone)]
pub struct Lexicon {
    kind: LexiconKind,
    entries: HashSet<String>,
    common: HashSet<String>,
    /// Longest entry in whitespace-separated words.
    max_words: usize,
}

/// One entry per line; blank lines and `#` comments are ignored.
fn parse_lines(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines().filter_map(|l| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some(l.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
        }
    })
}

fn common_words() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| parse_lines(COMMON_WORDS).collect())
}

impl Lexicon {
    pub fn from_text(kind: LexiconKind, text: &str) -> Result<Self, ExtractionError> {
        let entries: HashSet<String> = parse_lines(text).collect();
        if entries.is_empty() {
            return Err(ExtractionError::Config(format!("empty {} lexicon", kind.as_str())));
        }
        let common = match kind {
            LexiconKind::Ticker => entries.iter().filter(|e| common_words().contains(*e)).cloned().collect(),
            LexiconKind::Exchange => HashSet::new(),
        };
        let max_words = entries.iter().map(|e| e.split(' ').count()).max().unwrap_or(1);
        Ok(Lexicon { kind, entries, common, max_words })
    }

    pub fn load(kind: LexiconKind, path: impl AsRef<Path>) -> Result<Self, ExtractionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExtractionError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_text(kind, &text)
    }

    /// Bundled ticker registry snapshot.
    pub fn default_tickers() -> Self {
        Self::from_text(LexiconKind::Ticker, DEFAULT_TICKERS).expect("bundled ticker list")
    }

    /// Bundled list of exchange names.
    pub fn default_exchanges() -> Self {
        Self::from_text(LexiconKind::Exchange, DEFAULT_EXCHANGES).expect("bundled exchange list")
    }

    pub fn kind(&self) -> LexiconKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, s: &str) -> bool {
        self.entries.contains(s)
    }

    /// True for ticker entries that are also common English words.
    pub fn is_common_word(&self, s: &str) -> bool {
        self.common.contains(s)
    }

    pub fn common_word_count(&self) -> usize {
        self.common.len()
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Entries in lexicographic order.
    pub fn sorted_entries(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.entries.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Maps spelling variants to a canonical entity name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AliasMap {
    map: HashMap<String, String>,
}

impl AliasMap {
    /// Parses `alias<TAB>canonical` lines. Both sides are normalized, and
    /// a canonical name may not itself be an alias.
    pub fn from_tsv(text: &str) -> Result<Self, ExtractionError> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((a, c)) = line.split_once('\t') else {
                return Err(ExtractionError::Config(format!("alias line {}: expected alias<TAB>canonical", i + 1)));
            };
            let a = super::normalize::clean(a);
            let c = super::normalize::clean(c);
            if a.is_empty() || c.is_empty() {
                return Err(ExtractionError::Config(format!("alias line {}: empty field", i + 1)));
            }
            if a != c {
                map.insert(a, c);
            }
        }
        if let Some(c) = map.values().find(|c| map.contains_key(*c)) {
            return Err(ExtractionError::Config(format!("alias target `{c}` is itself an alias")));
        }
        Ok(AliasMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExtractionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExtractionError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_tsv(&text)
    }

    /// Bundled alias file.
    pub fn default_map() -> &'static AliasMap {
        static MAP: OnceLock<AliasMap> = OnceLock::new();
        MAP.get_or_init(|| AliasMap::from_tsv(DEFAULT_ALIASES).expect("bundled alias file"))
    }

    pub fn resolve<'a>(&'a self, s: &'a str) -> &'a str {
        self.map.get(s).map_or(s, String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
