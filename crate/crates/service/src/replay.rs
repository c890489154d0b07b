//! Chronological replay of stored corpora through the cascade.

use std::collections::{HashMap, HashSet};
use std::str::FromStr;
use std::time::{Duration, Instant};

use pumpwatch::evaluation::{event_delay, DelayReport};
use pumpwatch::windowing::{build_all_windows, WindowKey};
use pumpwatch::{GroupCorpus, Message, WindowMode, WindowSpec};

use crate::alert::AlertEvent;
use crate::cascade::{Cascade, Counters, GroupStream, StreamError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    Max,
    /// Sleeps for message time gaps divided by `factor`.
    Realtime { factor: f64 },
}

impl FromStr for ReplaySpeed {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(ReplaySpeed::Max),
            "realtime" => Ok(ReplaySpeed::Realtime { factor: 1.0 }),
            _ => match s.strip_prefix("realtime:").map(str::parse::<f64>) {
                Some(Ok(f)) if f > 0.0 && f.is_finite() => Ok(ReplaySpeed::Realtime { factor: f }),
                _ => Err(format!("unknown speed `{s}` (expected max, realtime or realtime:<factor>)")),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub alerts: Vec<AlertEvent>,
    /// Score of every trailing window, keyed by (group, message index).
    pub scores: HashMap<WindowKey, f64>,
    /// 1 where the score reached the threshold.
    pub predictions: HashMap<WindowKey, u8>,
    pub delay: DelayReport,
    pub messages: usize,
    pub windows_scored: u64,
    pub flagged: u64,
    pub extraction_calls: u64,
    pub elapsed: Duration,
}

/// All messages across groups ordered by (timestamp, group, msg_id).
pub fn interleave(corpora: &[GroupCorpus]) -> Vec<&Message> {
    let mut all: Vec<&Message> = corpora.iter().flat_map(|g| g.messages.iter()).collect();
    all.sort_by(|a, b| (a.timestamp, &a.group_id, a.msg_id).cmp(&(b.timestamp, &b.group_id, b.msg_id)));
    all
}

/// Drives every message through `cascade` in chronological order. Alerts
/// are stamped with their message timestamps so a replay is reproducible.
pub fn replay(corpora: &[GroupCorpus], cascade: &Cascade, speed: ReplaySpeed) -> Result<ReplayReport, StreamError> {
    let started = Instant::now();
    let base = (
        Counters::get(&cascade.counters.windows_scored),
        Counters::get(&cascade.counters.flagged),
        Counters::get(&cascade.counters.extraction_calls),
    );
    let mut streams: HashMap<&str, GroupStream> = HashMap::new();
    let mut scores = HashMap::new();
    let mut predictions = HashMap::new();
    let mut alerts = Vec::new();
    let ordered = interleave(corpora);
    let mut prev_ts = ordered.first().map(|m| m.timestamp);
    for msg in &ordered {
        if let (ReplaySpeed::Realtime { factor }, Some(p)) = (speed, prev_ts) {
            let gap = (msg.timestamp - p).max(0) as f64 / factor;
            if gap > 0.0 {
                std::thread::sleep(Duration::from_secs_f64(gap));
            }
        }
        prev_ts = Some(msg.timestamp);
        let stream = streams.entry(msg.group_id.as_str()).or_insert_with(|| cascade.new_stream(&msg.group_id));
        let p = cascade.process_message(stream, msg, msg.timestamp)?;
        let key = (msg.group_id.clone(), p.center_index);
        scores.insert(key.clone(), p.score);
        predictions.insert(key, p.flagged as u8);
        alerts.extend(p.alert);
    }
    let events: Vec<(String, usize)> =
        corpora.iter().flat_map(|g| g.pump_indices().into_iter().map(|i| (g.group_id.clone(), i))).collect();
    let delay = event_delay(&predictions, &events);
    Ok(ReplayReport {
        alerts,
        scores,
        predictions,
        delay,
        messages: ordered.len(),
        windows_scored: Counters::get(&cascade.counters.windows_scored) - base.0,
        flagged: Counters::get(&cascade.counters.flagged) - base.1,
        extraction_calls: Counters::get(&cascade.counters.extraction_calls) - base.2,
        elapsed: started.elapsed(),
    })
}

/// Offline trailing windows whose score differs bitwise from the replay
/// score, or that are missing from the replay.
pub fn offline_mismatches(corpora: &[GroupCorpus], cascade: &Cascade, report: &ReplayReport) -> Vec<WindowKey> {
    let spec = WindowSpec::new(cascade.k(), WindowMode::Trailing);
    let windows = build_all_windows(corpora, &spec);
    let detector = cascade.detector();
    let mut out: Vec<WindowKey> = windows
        .iter()
        .filter(|w| {
            let offline = detector.score(&w.text);
            report.scores.get(&w.key()).is_none_or(|s| s.to_bits() != offline.to_bits())
        })
        .map(|w| w.key())
        .collect();
    if report.scores.len() != windows.len() {
        let offline: HashSet<WindowKey> = windows.iter().map(|w| w.key()).collect();
        out.extend(report.scores.keys().filter(|k| !offline.contains(*k)).cloned());
    }
    out
}
