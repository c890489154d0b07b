//! Labeled chat-group corpora.
//!
//! A corpus file is UTF-8, one JSON record per line, preceded by a
//! `#pumpwatch-corpus-v1` header line. Records carry `group_id`, `msg_id`,
//! `ts` (UTC epoch seconds) and `text`, plus the optional label fields
//! `is_pump_start`, `coin`, `exchange`, `cancelled`, `has_image` and `note`.
//! Unknown fields are ignored so that slightly different dumps still load.

mod stats;
mod synth;

pub use stats::{corpus_stats, CorpusStats};
pub use synth::{generate_synthetic, SynthConfig, DEFAULT_SYNTH_COINS, DEFAULT_SYNTH_EXCHANGES};

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Header line every corpus file starts with.
pub const CORPUS_HEADER: &str = "#pumpwatch-corpus-v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] io::Error),
    #[error("missing `{CORPUS_HEADER}` header line")]
    MissingHeader,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate message id {msg_id} in group `{group_id}`")]
    Duplicate {
        line: usize,
        group_id: String,
        msg_id: u64,
    },
    #[error("invalid synthetic corpus config: {0}")]
    InvalidConfig(String),
}

/// One chat post with its manual labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub group_id: String,
    pub msg_id: u64,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub text: String,
    pub is_pump_start: bool,
    pub coin: Option<String>,
    pub exchange: Option<String>,
    pub cancelled: bool,
    pub has_image: bool,
    /// Free-form annotator note, stored verbatim.
    pub note: Option<String>,
}

impl Message {
    /// Unlabeled message.
    pub fn new(group_id: impl Into<String>, msg_id: u64, timestamp: i64, text: impl Into<String>) -> Self {
        Message {
            group_id: group_id.into(),
            msg_id,
            timestamp,
            text: text.into(),
            is_pump_start: false,
            coin: None,
            exchange: None,
            cancelled: false,
            has_image: false,
            note: None,
        }
    }

    /// Marks this message as a pump start announcement with the given targets.
    pub fn with_pump(mut self, coin: Option<&str>, exchange: Option<&str>) -> Self {
        self.is_pump_start = true;
        self.coin = coin.and_then(clean_label);
        self.exchange = exchange.and_then(clean_label);
        self
    }

    /// Stream ordering key within a group.
    pub fn order_key(&self) -> (i64, u64) {
        (self.timestamp, self.msg_id)
    }
}

fn clean_label(raw: &str) -> Option<String> {
    let t = raw.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.to_lowercase())
    }
}

/// All messages of one group, in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCorpus {
    pub group_id: String,
    pub messages: Vec<Message>,
}

impl GroupCorpus {
    /// Sorts by `(timestamp, msg_id)` and rejects duplicate message ids.
    pub fn from_messages(group_id: impl Into<String>, mut messages: Vec<Message>) -> Result<Self, CorpusError> {
        let group_id = group_id.into();
        messages.sort_by_key(Message::order_key);
        let mut seen = HashSet::with_capacity(messages.len());
        for m in &messages {
            if m.group_id != group_id {
                return Err(CorpusError::Malformed {
                    line: 0,
                    reason: format!("message {} belongs to group `{}`, not `{group_id}`", m.msg_id, m.group_id),
                });
            }
            if !seen.insert(m.msg_id) {
                return Err(CorpusError::Duplicate {
                    line: 0,
                    group_id: group_id.clone(),
                    msg_id: m.msg_id,
                });
            }
        }
        Ok(GroupCorpus { group_id, messages })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Positions of pump start announcements.
    pub fn pump_indices(&self) -> Vec<usize> {
        self.messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_pump_start)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarningKind {
    PumpWithoutCoin,
    PumpWithoutExchange,
    /// coin/exchange present on a message that is not a pump start; dropped.
    LabelsOnNonPump,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub kind: WarningKind,
}

/// Result of a successful load: corpora sorted by group id, plus warnings.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub groups: Vec<GroupCorpus>,
    pub warnings: Vec<LoadWarning>,
}

impl LoadedCorpus {
    pub fn warning_count(&self, kind: WarningKind) -> usize {
        self.warnings.iter().filter(|w| w.kind == kind).count()
    }
}

fn flag<'de, D: Deserializer<'de>>(de: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Bool(bool),
    }
    match Option::<Repr>::deserialize(de)? {
        None => Ok(false),
        Some(Repr::Bool(b)) => Ok(b),
        Some(Repr::Int(0)) => Ok(false),
        Some(Repr::Int(1)) => Ok(true),
        Some(Repr::Int(n)) => Err(serde::de::Error::custom(format!("flag must be 0 or 1, got {n}"))),
    }
}

#[derive(Deserialize)]
struct RecordIn {
    group_id: String,
    msg_id: u64,
    ts: i64,
    text: String,
    #[serde(default, deserialize_with = "flag")]
    is_pump_start: bool,
    #[serde(default)]
    coin: Option<String>,
    #[serde(default)]
    exchange: Option<String>,
    #[serde(default, deserialize_with = "flag")]
    cancelled: bool,
    #[serde(default, deserialize_with = "flag")]
    has_image: bool,
    #[serde(default)]
    note: Option<String>,
}

fn is_false(b: &u8) -> bool {
    *b == 0
}

#[derive(Serialize)]
struct RecordOut<'a> {
    group_id: &'a str,
    msg_id: u64,
    ts: i64,
    text: &'a str,
    #[serde(skip_serializing_if = "is_false")]
    is_pump_start: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    coin: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exchange: Option<&'a str>,
    #[serde(skip_serializing_if = "is_false")]
    cancelled: u8,
    #[serde(skip_serializing_if = "is_false")]
    has_image: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

/// Loads a corpus file. See the module docs for the record format.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path)?;
    load_corpus_from_reader(BufReader::new(file))
}

pub fn load_corpus_from_reader<R: BufRead>(reader: R) -> Result<LoadedCorpus, CorpusError> {
    let mut groups: BTreeMap<String, Vec<Message>> = BTreeMap::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    let mut warnings = Vec::new();
    let mut header_seen = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            if !trimmed.starts_with(CORPUS_HEADER) {
                return Err(CorpusError::MissingHeader);
            }
            header_seen = true;
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if !seen.insert((rec.group_id.clone(), rec.msg_id)) {
            return Err(CorpusError::Duplicate {
                line: line_no,
                group_id: rec.group_id,
                msg_id: rec.msg_id,
            });
        }
        let mut coin = rec.coin.as_deref().and_then(clean_label);
        let mut exchange = rec.exchange.as_deref().and_then(clean_label);
        if rec.is_pump_start {
            if coin.is_none() {
                warnings.push(LoadWarning { line: line_no, kind: WarningKind::PumpWithoutCoin });
            }
            if exchange.is_none() {
                warnings.push(LoadWarning { line: line_no, kind: WarningKind::PumpWithoutExchange });
            }
        } else if coin.is_some() || exchange.is_some() {
            warnings.push(LoadWarning { line: line_no, kind: WarningKind::LabelsOnNonPump });
            coin = None;
            exchange = None;
        }
        let msg = Message {
            group_id: rec.group_id.clone(),
            msg_id: rec.msg_id,
            timestamp: rec.ts,
            text: rec.text,
            is_pump_start: rec.is_pump_start,
            coin,
            exchange,
            cancelled: rec.cancelled,
            has_image: rec.has_image,
            note: rec.note,
        };
        groups.entry(rec.group_id).or_default().push(msg);
    }

    for w in &warnings {
        log::warn!("corpus line {}: {:?}", w.line, w.kind);
    }

    let groups = groups
        .into_iter()
        .map(|(gid, mut messages)| {
            messages.sort_by_key(Message::order_key);
            GroupCorpus { group_id: gid, messages }
        })
        .collect();
    Ok(LoadedCorpus { groups, warnings })
}

/// Writes corpora in the line-delimited record format, header included.
pub fn write_corpus<W: Write>(mut out: W, corpora: &[GroupCorpus]) -> io::Result<()> {
    writeln!(out, "{CORPUS_HEADER}")?;
    for g in corpora {
        for m in &g.messages {
            write_record(&mut out, m)?;
        }
    }
    out.flush()
}

/// Writes a single message record (no header).
pub fn write_record<W: Write>(out: &mut W, m: &Message) -> io::Result<()> {
    let rec = RecordOut {
        group_id: &m.group_id,
        msg_id: m.msg_id,
        ts: m.timestamp,
        text: &m.text,
        is_pump_start: m.is_pump_start as u8,
        coin: m.coin.as_deref(),
        exchange: m.exchange.as_deref(),
        cancelled: m.cancelled as u8,
        has_image: m.has_image as u8,
        note: m.note.as_deref(),
    };
    serde_json::to_writer(&mut *out, &rec)?;
    out.write_all(b"\n")
}

pub fn save_corpus(path: impl AsRef<Path>, corpora: &[GroupCorpus]) -> io::Result<()> {
    let file = File::create(path)?;
    write_corpus(io::BufWriter::new(file), corpora)
}

/// Hex SHA-256 of the canonical serialization; embedded in reports.
pub fn corpus_digest(corpora: &[GroupCorpus]) -> String {
    struct HashWriter(Sha256);
    impl Write for HashWriter {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.0.update(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }
    let mut w = HashWriter(Sha256::new());
    write_corpus(&mut w, corpora).expect("hashing never fails");
    let digest = w.0.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
