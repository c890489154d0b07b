//! Per-message detection cascade: trailing window, detector score, and
//! extraction only for flagged windows.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use pumpwatch::corpus::Message;
use pumpwatch::detector::Detector;
use pumpwatch::extraction::{
    llm_extract, rule_extract, ChatClient, ExtractionError, HttpChatClient, Lexicon, LexiconKind, PromptTemplate,
    RetryPolicy,
};
use pumpwatch::windowing::join_texts;
use pumpwatch::{ExtractionMethod, ExtractionResult};
use thiserror::Error;

use crate::alert::{alert_id, review_required, AlertEvent, AlertStatus};
use crate::config::{ConfigError, ExtractionMode, PipelineConfig};

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("message {got:?} of group {group} is not after {last:?}")]
    OutOfOrder { group: String, last: (i64, u64), got: (i64, u64) },
    #[error("message for group {got} sent to stream of group {expected}")]
    WrongGroup { expected: String, got: String },
}

/// Runs on flagged windows only.
pub enum Extractor {
    Rule { tickers: Lexicon, exchanges: Lexicon },
    Llm { client: Box<dyn ChatClient>, template: PromptTemplate, policy: RetryPolicy },
    Both { tickers: Lexicon, exchanges: Lexicon, client: Box<dyn ChatClient>, template: PromptTemplate, policy: RetryPolicy },
}

fn failed_llm(err: &ExtractionError, elapsed: f64) -> ExtractionResult {
    ExtractionResult {
        coin: None,
        exchange: None,
        method: ExtractionMethod::Llm,
        raw_response: Some(format!("error: {err}")),
        parse_ok: false,
        retries: match err {
            ExtractionError::Exhausted { attempts, .. } => attempts.saturating_sub(1),
            _ => 0,
        },
        elapsed_secs: elapsed,
    }
}

impl Extractor {
    pub fn rule_default() -> Self {
        Extractor::Rule { tickers: Lexicon::default_tickers(), exchanges: Lexicon::default_exchanges() }
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        let lexicon = |kind, path: &Option<std::path::PathBuf>| -> Result<Lexicon, ConfigError> {
            match path {
                Some(p) => Lexicon::load(kind, p).map_err(|e| ConfigError::BadValue {
                    key: format!("{}s_path", kind.as_str()),
                    reason: e.to_string(),
                }),
                None => Ok(match kind {
                    LexiconKind::Ticker => Lexicon::default_tickers(),
                    LexiconKind::Exchange => Lexicon::default_exchanges(),
                }),
            }
        };
        let template = || -> Result<PromptTemplate, ConfigError> {
            match &cfg.prompt_path {
                Some(p) => PromptTemplate::load(p).map_err(|e| ConfigError::BadValue { key: "prompt_path".into(), reason: e.to_string() }),
                None => Ok(PromptTemplate::default()),
            }
        };
        let policy = RetryPolicy { max_retries: cfg.llm_max_retries, ..Default::default() };
        let client = || Box::new(HttpChatClient::new(cfg.llm_config())) as Box<dyn ChatClient>;
        Ok(match cfg.extraction_mode {
            ExtractionMode::RuleBased => Extractor::Rule {
                tickers: lexicon(LexiconKind::Ticker, &cfg.tickers_path)?,
                exchanges: lexicon(LexiconKind::Exchange, &cfg.exchanges_path)?,
            },
            ExtractionMode::Llm => Extractor::Llm { client: client(), template: template()?, policy },
            ExtractionMode::Both => Extractor::Both {
                tickers: lexicon(LexiconKind::Ticker, &cfg.tickers_path)?,
                exchanges: lexicon(LexiconKind::Exchange, &cfg.exchanges_path)?,
                client: client(),
                template: template()?,
                policy,
            },
        })
    }

    /// Primary result, optional secondary result, and whether an LLM call
    /// failed. A failed LLM call yields an empty result rather than losing
    /// the alert.
    fn run(&self, text: &str) -> (ExtractionResult, Option<ExtractionResult>, bool) {
        let llm = |client: &dyn ChatClient, template: &PromptTemplate, policy: &RetryPolicy| {
            let t = Instant::now();
            match llm_extract(text, client, template, policy) {
                Ok(r) => (r, false),
                Err(e) => {
                    log::warn!("LLM extraction failed: {e}");
                    (failed_llm(&e, t.elapsed().as_secs_f64()), true)
                }
            }
        };
        match self {
            Extractor::Rule { tickers, exchanges } => (rule_extract(text, tickers, exchanges), None, false),
            Extractor::Llm { client, template, policy } => {
                let (r, failed) = llm(client.as_ref(), template, policy);
                (r, None, failed)
            }
            Extractor::Both { tickers, exchanges, client, template, policy } => {
                let (r, failed) = llm(client.as_ref(), template, policy);
                (r, Some(rule_extract(text, tickers, exchanges)), failed)
            }
        }
    }
}

/// Trailing buffer and ordering state of one group stream.
#[derive(Debug, Clone)]
pub struct GroupStream {
    group_id: String,
    buffer: VecDeque<Message>,
    capacity: usize,
    last_key: Option<(i64, u64)>,
    next_index: usize,
    last_alert_index: Option<usize>,
}

impl GroupStream {
    pub fn new(group_id: impl Into<String>, k: usize) -> Self {
        let capacity = 2 * k + 1;
        GroupStream {
            group_id: group_id.into(),
            buffer: VecDeque::with_capacity(capacity),
            capacity,
            last_key: None,
            next_index: 0,
            last_alert_index: None,
        }
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    /// Messages accepted so far.
    pub fn len(&self) -> usize {
        self.next_index
    }

    pub fn is_empty(&self) -> bool {
        self.next_index == 0
    }
}

/// Running counters shared across groups.
#[derive(Debug, Default)]
pub struct Counters {
    pub messages_seen: AtomicU64,
    pub windows_scored: AtomicU64,
    pub flagged: AtomicU64,
    pub suppressed: AtomicU64,
    pub extraction_calls: AtomicU64,
    pub extraction_failures: AtomicU64,
    latencies: Mutex<LatencyRing>,
}

#[derive(Debug, Default)]
struct LatencyRing {
    values: Vec<f64>,
    next: usize,
}

const LATENCY_RING: usize = 10_000;

impl Counters {
    fn record_latency(&self, secs: f64) {
        let mut r = self.latencies.lock().expect("latency ring");
        if r.values.len() < LATENCY_RING {
            r.values.push(secs);
        } else {
            let i = r.next;
            r.values[i] = secs;
        }
        r.next = (r.next + 1) % LATENCY_RING;
    }

    /// Median scoring latency over the most recent windows, in seconds.
    pub fn median_latency(&self) -> Option<f64> {
        let mut v = self.latencies.lock().expect("latency ring").values.clone();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    }

    pub fn get(c: &AtomicU64) -> u64 {
        c.load(Ordering::Relaxed)
    }
}

/// Outcome of one message.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub center_index: usize,
    pub score: f64,
    pub flagged: bool,
    pub alert: Option<AlertEvent>,
}

pub struct Cascade {
    detector: Arc<dyn Detector>,
    extractor: Extractor,
    k: usize,
    cooldown: usize,
    sampling_rate: f64,
    seed: u64,
    pub counters: Counters,
}

impl Cascade {
    pub fn new(detector: Arc<dyn Detector>, extractor: Extractor, k: usize) -> Self {
        assert!(k >= 1, "window half-width must be at least 1");
        Cascade { detector, extractor, k, cooldown: 0, sampling_rate: 1.0, seed: 0, counters: Counters::default() }
    }

    pub fn with_cooldown(mut self, messages: usize) -> Self {
        self.cooldown = messages;
        self
    }

    pub fn with_review_sampling(mut self, rate: f64, seed: u64) -> Self {
        self.sampling_rate = rate;
        self.seed = seed;
        self
    }

    pub fn from_config(cfg: &PipelineConfig, detector: Arc<dyn Detector>) -> Result<Self, ConfigError> {
        Ok(Cascade::new(detector, Extractor::from_config(cfg)?, cfg.window_k)
            .with_cooldown(cfg.alert_cooldown)
            .with_review_sampling(cfg.review_sampling_rate, cfg.seed))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn detector(&self) -> &dyn Detector {
        self.detector.as_ref()
    }

    pub fn new_stream(&self, group_id: impl Into<String>) -> GroupStream {
        GroupStream::new(group_id, self.k)
    }

    /// Appends `msg` to its group's trailing buffer, scores the window that
    /// ends at it, and extracts and returns an alert when flagged.
    pub fn process_message(&self, state: &mut GroupStream, msg: &Message, now: i64) -> Result<Processed, StreamError> {
        if msg.group_id != state.group_id {
            return Err(StreamError::WrongGroup { expected: state.group_id.clone(), got: msg.group_id.clone() });
        }
        let key = msg.order_key();
        if let Some(last) = state.last_key {
            if key <= last {
                return Err(StreamError::OutOfOrder { group: state.group_id.clone(), last, got: key });
            }
        }
        state.last_key = Some(key);
        if state.buffer.len() == state.capacity {
            state.buffer.pop_front();
        }
        state.buffer.push_back(msg.clone());
        let center_index = state.next_index;
        state.next_index += 1;
        self.counters.messages_seen.fetch_add(1, Ordering::Relaxed);

        let text = join_texts(state.buffer.iter().map(|m| m.text.as_str()));
        let t = Instant::now();
        let score = self.detector.score(&text);
        self.counters.record_latency(t.elapsed().as_secs_f64());
        self.counters.windows_scored.fetch_add(1, Ordering::Relaxed);
        let threshold = self.detector.threshold();
        let flagged = score >= threshold;
        if !flagged {
            return Ok(Processed { center_index, score, flagged, alert: None });
        }
        self.counters.flagged.fetch_add(1, Ordering::Relaxed);
        if let Some(last) = state.last_alert_index {
            if self.cooldown > 0 && center_index - last <= self.cooldown {
                self.counters.suppressed.fetch_add(1, Ordering::Relaxed);
                return Ok(Processed { center_index, score, flagged, alert: None });
            }
        }
        state.last_alert_index = Some(center_index);
        self.counters.extraction_calls.fetch_add(1, Ordering::Relaxed);
        let (extraction, secondary_extraction, failed) = self.extractor.run(&text);
        if failed {
            self.counters.extraction_failures.fetch_add(1, Ordering::Relaxed);
        }
        let version = self.detector.version().to_string();
        let id = alert_id(&msg.group_id, msg.msg_id, &version);
        let alert = AlertEvent {
            review_required: review_required(&id, self.seed, self.sampling_rate),
            alert_id: id,
            seq: 0,
            group_id: msg.group_id.clone(),
            msg_id: msg.msg_id,
            center_index,
            center_timestamp: msg.timestamp,
            center_text: msg.text.clone(),
            window_text: text,
            score,
            threshold,
            model_version: version,
            extraction,
            secondary_extraction,
            created_at: now,
            status: AlertStatus::Pending,
            review: None,
        };
        Ok(Processed { center_index, score, flagged, alert: Some(alert) })
    }
}
