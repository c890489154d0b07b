//! Message windows and leakage-free temporal splits.
//!
//! A window is built for every message position of a group. Symmetric
//! windows span `k` messages on each side of the center (offline use);
//! trailing windows end at the center and span the `2k` preceding messages
//! (online use). Windows are clipped at the group boundaries, never padded,
//! and never cross groups.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::corpus::GroupCorpus;

/// Default half-width; windows hold up to `2k + 1 = 11` messages.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WindowMode {
    Symmetric,
    Trailing,
}

impl WindowMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowMode::Symmetric => "symmetric",
            WindowMode::Trailing => "trailing",
        }
    }
}

impl std::str::FromStr for WindowMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "symmetric" => Ok(WindowMode::Symmetric),
            "trailing" => Ok(WindowMode::Trailing),
            _ => Err(format!("unknown window mode `{s}` (expected symmetric|trailing)")),
        }
    }
}

/// How a window's label is derived from its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelRule {
    /// Positive iff any member is a pump start.
    #[default]
    Contains,
    /// Positive iff the center message is a pump start.
    Center,
}

impl LabelRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::Contains => "contains",
            LabelRule::Center => "center",
        }
    }
}

impl std::str::FromStr for LabelRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "contains" => Ok(LabelRule::Contains),
            "center" => Ok(LabelRule::Center),
            _ => Err(format!("unknown label rule `{s}` (expected contains|center)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowSpec {
    pub k: usize,
    pub mode: WindowMode,
    pub label_rule: LabelRule,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { k: DEFAULT_K, mode: WindowMode::Symmetric, label_rule: LabelRule::Contains }
    }
}

impl WindowSpec {
    pub fn new(k: usize, mode: WindowMode) -> Self {
        WindowSpec { k, mode, ..Default::default() }
    }

    /// Maximum number of members.
    pub fn size(&self) -> usize {
        2 * self.k + 1
    }

    /// Inclusive member range for `center` in a group of `n` messages.
    pub fn member_range(&self, center: usize, n: usize) -> (usize, usize) {
        match self.mode {
            WindowMode::Symmetric => (center.saturating_sub(self.k), (center + self.k).min(n - 1)),
            WindowMode::Trailing => (center.saturating_sub(2 * self.k), center),
        }
    }
}

/// Window identity: group and center position.
pub type WindowKey = (String, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub group_id: String,
    pub center_index: usize,
    pub member_msg_ids: Vec<u64>,
    /// Member texts in time order, newline separated.
    pub text: String,
    pub label: u8,
    /// Timestamp of the newest member.
    pub latest_ts: i64,
}

impl Window {
    pub fn key(&self) -> WindowKey {
        (self.group_id.clone(), self.center_index)
    }
}

/// Joins member texts the same way offline and online code paths do.
pub fn join_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> String {
    let mut out = String::new();
    for (i, t) in texts.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(t);
    }
    out
}

/// One window per message position.
///
/// # Panics
/// If `spec.k == 0`.
pub fn build_windows(corpus: &GroupCorpus, spec: &WindowSpec) -> Vec<Window> {
    assert!(spec.k >= 1, "window half-width must be at least 1");
    let msgs = &corpus.messages;
    let n = msgs.len();
    (0..n)
        .map(|c| {
            let (lo, hi) = spec.member_range(c, n);
            let members = &msgs[lo..=hi];
            let label = match spec.label_rule {
                LabelRule::Contains => members.iter().any(|m| m.is_pump_start),
                LabelRule::Center => msgs[c].is_pump_start,
            };
            Window {
                group_id: corpus.group_id.clone(),
                center_index: c,
                member_msg_ids: members.iter().map(|m| m.msg_id).collect(),
                text: join_texts(members.iter().map(|m| m.text.as_str())),
                label: label as u8,
                latest_ts: members.iter().map(|m| m.timestamp).max().unwrap(),
            }
        })
        .collect()
}

/// Windows for every group, concatenated in group order.
pub fn build_all_windows(corpora: &[GroupCorpus], spec: &WindowSpec) -> Vec<Window> {
    corpora.iter().flat_map(|g| build_windows(g, spec)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    fn from_block(b: usize) -> Self {
        Partition::ALL[b]
    }
}

impl std::str::FromStr for Partition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            _ => Err(format!("unknown partition `{s}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("need at least {needed} windows, got {got}")]
    TooFewWindows { needed: usize, got: usize },
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
}

/// Outcome of a time-ordered split into contiguous blocks.
///
/// `blocks[i]` is the block of window `i` (input order), or `None` when the
/// window was purged: it shares a message with a window of a later block
/// and keeping it would leak that message across the boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSplit {
    pub blocks: Vec<Option<usize>>,
    pub promoted: usize,
    pub purged: usize,
}

/// Assigns windows to `fractions.len()` contiguous time blocks.
///
/// Windows are ordered by `(latest_ts, group_id, center_index)` and cut at
/// the cumulative fractions. A window that shares a message with a window
/// of a later block is promoted to that block (one step). Windows that
/// still share a message with a later block afterwards are purged, which
/// makes every message's windows live in a single block.
pub fn time_blocks(windows: &[Window], fractions: &[f64]) -> Result<BlockSplit, SplitError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadFractions(fractions.to_vec()));
    }
    let nb = fractions.len();
    if windows.len() < nb {
        return Err(SplitError::TooFewWindows { needed: nb, got: windows.len() });
    }

    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by(|&a, &b| {
        let (wa, wb) = (&windows[a], &windows[b]);
        (wa.latest_ts, &wa.group_id, wa.center_index).cmp(&(wb.latest_ts, &wb.group_id, wb.center_index))
    });

    let n = windows.len();
    let mut cuts = Vec::with_capacity(nb);
    let mut acc = 0.0;
    for f in &fractions[..nb - 1] {
        acc += f;
        cuts.push(((acc * n as f64).round() as usize).min(n));
    }
    cuts.push(n);

    let mut initial = vec![0usize; n];
    let mut b = 0;
    for (rank, &w) in order.iter().enumerate() {
        while rank >= cuts[b] {
            b += 1;
        }
        initial[w] = b;
    }

    // Messages are identified by (group, msg_id); index them densely.
    let mut msg_index: HashMap<(&str, u64), usize> = HashMap::new();
    let members: Vec<Vec<usize>> = windows
        .iter()
        .map(|w| {
            w.member_msg_ids
                .iter()
                .map(|&id| {
                    let next = msg_index.len();
                    *msg_index.entry((w.group_id.as_str(), id)).or_insert(next)
                })
                .collect()
        })
        .collect();

    let max_block = |assign: &[Option<usize>]| {
        let mut m = vec![0usize; msg_index.len()];
        for (w, ids) in members.iter().enumerate() {
            if let Some(b) = assign[w] {
                for &id in ids {
                    m[id] = m[id].max(b);
                }
            }
        }
        m
    };

    let initial: Vec<Option<usize>> = initial.into_iter().map(Some).collect();
    let reach = max_block(&initial);
    let mut promoted = 0;
    let assign: Vec<Option<usize>> = members
        .iter()
        .zip(&initial)
        .map(|(ids, b)| {
            let b = b.unwrap();
            let nb = ids.iter().map(|&id| reach[id]).max().unwrap_or(b).max(b);
            if nb > b {
                promoted += 1;
            }
            Some(nb)
        })
        .collect();

    let reach = max_block(&assign);
    let mut purged = 0;
    let blocks = members
        .iter()
        .zip(&assign)
        .map(|(ids, b)| {
            let b = b.unwrap();
            if ids.iter().any(|&id| reach[id] > b) {
                purged += 1;
                None
            } else {
                Some(b)
            }
        })
        .collect();

    Ok(BlockSplit { blocks, promoted, purged })
}

/// Train/validation/test assignment keyed by window.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub assigned: BTreeMap<WindowKey, Partition>,
    /// Windows dropped to keep every message inside one partition.
    pub purged: Vec<WindowKey>,
    /// Windows moved to a later partition by the boundary rule.
    pub promoted: usize,
}

impl SplitAssignment {
    pub fn get(&self, w: &Window) -> Option<Partition> {
        self.assigned.get(&(w.group_id.clone(), w.center_index)).copied()
    }

    pub fn count(&self, p: Partition) -> usize {
        self.assigned.values().filter(|&&q| q == p).count()
    }

    /// Windows of partition `p`, in input order.
    pub fn select<'a>(&self, windows: &'a [Window], p: Partition) -> Vec<&'a Window> {
        windows.iter().filter(|w| self.get(w) == Some(p)).collect()
    }

    /// Tab-separated `group_id\tcenter_index\tpartition` rows; purged windows
    /// carry the partition `purged`.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&WindowKey, &str)> = self.assigned.iter().map(|(k, p)| (k, p.as_str())).collect();
        rows.extend(self.purged.iter().map(|k| (k, "purged")));
        rows.sort();
        let mut s = String::from("group_id\tcenter_index\tpartition\n");
        for ((g, c), p) in rows {
            s += &format!("{g}\t{c}\t{p}\n");
        }
        s
    }
}

/// Chronological train/validation/test split with boundary promotion.
pub fn temporal_split(windows: &[Window], fractions: (f64, f64, f64)) -> Result<SplitAssignment, SplitError> {
    if windows.len() < 3 {
        return Err(SplitError::TooFewWindows { needed: 3, got: windows.len() });
    }
    let split = time_blocks(windows, &[fractions.0, fractions.1, fractions.2])?;
    let mut out = SplitAssignment { promoted: split.promoted, ..Default::default() };
    for (w, b) in windows.iter().zip(split.blocks) {
        match b {
            Some(b) => {
                out.assigned.insert(w.key(), Partition::from_block(b));
            }
            None => out.purged.push(w.key()),
        }
    }
    Ok(out)
}

/// Default 60/20/20 fractions.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);

/// Counts messages whose windows span more than one partition.
pub fn leakage_violations(windows: &[Window], split: &SplitAssignment) -> usize {
    let mut seen: HashMap<(&str, u64), Partition> = HashMap::new();
    let mut bad = std::collections::HashSet::new();
    for w in windows {
        let Some(p) = split.get(w) else { continue };
        for &id in &w.member_msg_ids {
            let key = (w.group_id.as_str(), id);
            match seen.get(&key) {
                Some(&q) if q != p => {
                    bad.insert(key);
                }
                Some(_) => {}
                None => {
                    seen.insert(key, p);
                }
            }
        }
    }
    bad.len()
}
