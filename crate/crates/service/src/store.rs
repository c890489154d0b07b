//! Alert and label persistence: an append-only JSON-lines log of alert and
//! review records, compacted into a snapshot on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use pumpwatch::corpus::{write_corpus, CorpusError};
use pumpwatch::{GroupCorpus, Message};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{AlertEvent, AlertStatus, Decision, Review, ReviewError};

pub const LOG_FILE: &str = "events.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("alert {0} not found")]
    NotFound(String),
    /// Carries the authoritative state so callers can show it.
    #[error("alert {} was already reviewed ({})", .0.alert_id, .0.status)]
    Conflict(Box<AlertEvent>),
    #[error(transparent)]
    Invalid(ReviewError),
    #[error("alert store is read-only after a write failure: {0}")]
    ReadOnly(String),
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store record at {path}:{line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A reviewed alert turned into a training label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub alert_id: String,
    pub group_id: String,
    pub msg_id: u64,
    pub timestamp: i64,
    pub text: String,
    pub is_pump_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<String>,
    pub decision: Decision,
    pub reviewed_at: i64,
}

impl LabelRecord {
    fn from_alert(a: &AlertEvent, review: &Review) -> Self {
        let pump = review.decision != Decision::Rejected;
        LabelRecord {
            alert_id: a.alert_id.clone(),
            group_id: a.group_id.clone(),
            msg_id: a.msg_id,
            timestamp: a.center_timestamp,
            text: a.center_text.clone(),
            is_pump_start: pump,
            coin: if pump { a.final_coin().map(String::from) } else { None },
            exchange: if pump { a.final_exchange().map(String::from) } else { None },
            decision: review.decision,
            reviewed_at: review.reviewed_at,
        }
    }

    pub fn to_message(&self) -> Message {
        let m = Message::new(&self.group_id, self.msg_id, self.timestamp, &self.text);
        if self.is_pump_start {
            m.with_pump(self.coin.as_deref(), self.exchange.as_deref())
        } else {
            m
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord {
    Alert(Box<AlertEvent>),
    Review { alert_id: String, review: Review },
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    alerts: Vec<AlertEvent>,
    labels: Vec<LabelRecord>,
}

/// In-memory alert state, optionally backed by a directory.
#[derive(Debug, Default)]
pub struct AlertStore {
    dir: Option<PathBuf>,
    log: Option<File>,
    alerts: Vec<AlertEvent>,
    index: HashMap<String, usize>,
    labels: Vec<LabelRecord>,
    read_only: Option<String>,
}

impl AlertStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        AlertStore::default()
    }

    /// Loads the snapshot and log under `dir`, compacts them, and opens the
    /// log for appending.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = AlertStore::in_memory();
        let snap_path = dir.join(SNAPSHOT_FILE);
        if snap_path.exists() {
            let snap: Snapshot = serde_json::from_reader(BufReader::new(File::open(&snap_path)?))
                .map_err(|e| StoreError::Corrupt { path: snap_path.clone(), line: 0, reason: e.to_string() })?;
            for a in snap.alerts {
                store.index.insert(a.alert_id.clone(), store.alerts.len());
                store.alerts.push(a);
            }
            store.labels = snap.labels;
        }
        let log_path = dir.join(LOG_FILE);
        if log_path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&log_path)?).lines().collect::<Result<_, _>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LogRecord>(line) {
                    Ok(rec) => store.apply(rec),
                    // A torn final line is what a crash mid-append leaves behind.
                    Err(e) if i + 1 == last => log::warn!("dropping torn record at end of {}: {e}", log_path.display()),
                    Err(e) => {
                        return Err(StoreError::Corrupt { path: log_path, line: i + 1, reason: e.to_string() });
                    }
                }
            }
        }
        store.dir = Some(dir);
        store.compact()?;
        Ok(store)
    }

    fn apply(&mut self, rec: LogRecord) {
        match rec {
            LogRecord::Alert(a) => {
                if !self.index.contains_key(&a.alert_id) {
                    self.index.insert(a.alert_id.clone(), self.alerts.len());
                    self.alerts.push(*a);
                }
            }
            LogRecord::Review { alert_id, review } => {
                if let Some(&i) = self.index.get(&alert_id) {
                    if self.alerts[i].apply_review(review.clone()).is_ok() {
                        let r = self.alerts[i].review.clone().expect("just reviewed");
                        self.labels.push(LabelRecord::from_alert(&self.alerts[i], &r));
                    }
                }
            }
        }
    }

    /// Rewrites the snapshot atomically and truncates the log.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let Some(dir) = self.dir.clone() else { return Ok(()) };
        let snap = Snapshot { alerts: self.alerts.clone(), labels: self.labels.clone() };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, &snap).map_err(io::Error::other)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        self.log = Some(File::create(dir.join(LOG_FILE))?);
        Ok(())
    }

    fn append(&mut self, rec: &LogRecord) -> Result<(), StoreError> {
        if let Some(reason) = &self.read_only {
            return Err(StoreError::ReadOnly(reason.clone()));
        }
        let Some(log) = self.log.as_mut() else { return Ok(()) };
        let mut line = serde_json::to_string(rec).map_err(io::Error::other)?;
        line.push('\n');
        let res = log.write_all(line.as_bytes()).and_then(|_| log.sync_data());
        if let Err(e) = res {
            log::error!("alert store write failed, refusing further writes: {e}");
            self.read_only = Some(e.to_string());
            return Err(StoreError::ReadOnly(e.to_string()));
        }
        Ok(())
    }

    /// Simulates a storage failure.
    pub fn set_read_only(&mut self, reason: impl Into<String>) {
        self.read_only = Some(reason.into());
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only.is_some()
    }

    /// Stores a new alert and assigns its sequence number. Returns the stored
    /// alert and whether it was new; re-inserting a known id is a no-op.
    pub fn insert(&mut self, mut alert: AlertEvent) -> Result<(AlertEvent, bool), StoreError> {
        if let Some(&i) = self.index.get(&alert.alert_id) {
            return Ok((self.alerts[i].clone(), false));
        }
        alert.seq = self.alerts.len() as u64 + 1;
        alert.status = AlertStatus::Pending;
        alert.review = None;
        self.append(&LogRecord::Alert(Box::new(alert.clone())))?;
        self.index.insert(alert.alert_id.clone(), self.alerts.len());
        self.alerts.push(alert.clone());
        Ok((alert, true))
    }

    /// Applies an analyst decision; the first decision wins.
    pub fn review(&mut self, alert_id: &str, review: Review) -> Result<AlertEvent, StoreError> {
        let &i = self.index.get(alert_id).ok_or_else(|| StoreError::NotFound(alert_id.to_string()))?;
        let mut updated = self.alerts[i].clone();
        match updated.apply_review(review) {
            Ok(()) => {}
            Err(ReviewError::Conflict { .. }) => return Err(StoreError::Conflict(Box::new(updated))),
            Err(e) => return Err(StoreError::Invalid(e)),
        }
        let stored = updated.review.clone().expect("just reviewed");
        self.append(&LogRecord::Review { alert_id: alert_id.to_string(), review: stored.clone() })?;
        self.labels.push(LabelRecord::from_alert(&updated, &stored));
        self.alerts[i] = updated.clone();
        Ok(updated)
    }

    pub fn get(&self, alert_id: &str) -> Option<&AlertEvent> {
        self.index.get(alert_id).map(|&i| &self.alerts[i])
    }

    pub fn len(&self) -> usize {
        self.alerts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty()
    }

    /// Highest sequence number stored so far.
    pub fn cursor(&self) -> u64 {
        self.alerts.len() as u64
    }

    /// Alerts with `seq > since`, optionally filtered by status, oldest first.
    pub fn list(&self, status: Option<AlertStatus>, since: u64) -> Vec<AlertEvent> {
        self.alerts
            .iter()
            .skip(since.min(self.alerts.len() as u64) as usize)
            .filter(|a| status.is_none_or(|s| a.status == s))
            .cloned()
            .collect()
    }

    /// Pending alerts marked for required review.
    pub fn review_queue(&self) -> Vec<AlertEvent> {
        self.alerts.iter().filter(|a| a.status == AlertStatus::Pending && a.review_required).cloned().collect()
    }

    pub fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out: BTreeMap<&'static str, usize> = AlertStatus::ALL.iter().map(|s| (s.as_str(), 0)).collect();
        for a in &self.alerts {
            *out.get_mut(a.status.as_str()).expect("all statuses present") += 1;
        }
        out
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    /// Reviewed alerts as labeled corpora, one per group. A message
    /// reviewed under several model versions keeps its latest label.
    pub fn export_labels(&self) -> Result<Vec<GroupCorpus>, StoreError> {
        let mut latest: BTreeMap<(String, u64), &LabelRecord> = BTreeMap::new();
        for l in &self.labels {
            latest.insert((l.group_id.clone(), l.msg_id), l);
        }
        let mut groups: BTreeMap<String, Vec<Message>> = BTreeMap::new();
        for l in latest.values() {
            groups.entry(l.group_id.clone()).or_default().push(l.to_message());
        }
        Ok(groups.into_iter().map(|(g, msgs)| GroupCorpus::from_messages(g, msgs)).collect::<Result<_, _>>()?)
    }

    /// Writes [`Self::export_labels`] in corpus format; returns the record count.
    pub fn write_labels<W: Write>(&self, out: W) -> Result<usize, StoreError> {
        let corpora = self.export_labels()?;
        write_corpus(out, &corpora)?;
        Ok(corpora.iter().map(|g| g.len()).sum())
    }
}

/// Opens a persisted store read-only for export.
pub fn export_labels(dir: impl AsRef<Path>) -> Result<Vec<GroupCorpus>, StoreError> {
    let dir = dir.as_ref();
    if !dir.exists() {
        return Err(StoreError::Io(io::Error::new(io::ErrorKind::NotFound, format!("{} does not exist", dir.display()))));
    }
    let mut store = AlertStore::open(dir)?;
    store.log = None;
    store.export_labels()
}
