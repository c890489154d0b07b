use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::json;

use super::lexicon::{AliasMap, LexiconKind};
use super::normalize::normalize_optional;
use super::{ExtractionError, ExtractionMethod, ExtractionResult};

pub const COIN_MARKER: &str = "cryptocurrency:";
pub const EXCHANGE_MARKER: &str = "Exchange:";
pub const WINDOW_SLOT: &str = "{window}";
/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "PUMPWATCH_LLM_TOKEN";

const DEFAULT_PROMPT: &str = include_str!("../../data/prompt.txt");

/// Instruction text with a single `{window}` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    prefix: String,
    suffix: String,
}

impl PromptTemplate {
    pub fn new(text: &str) -> Result<Self, ExtractionError> {
        let Some((prefix, suffix)) = text.split_once(WINDOW_SLOT) else {
            return Err(ExtractionError::Config(format!("prompt template lacks the {WINDOW_SLOT} slot")));
        };
        if suffix.contains(WINDOW_SLOT) {
            return Err(ExtractionError::Config(format!("prompt template has more than one {WINDOW_SLOT} slot")));
        }
        for m in [COIN_MARKER, EXCHANGE_MARKER] {
            if !text.contains(m) {
                return Err(ExtractionError::Config(format!("prompt template must mention `{m}`")));
            }
        }
        Ok(PromptTemplate { prefix: prefix.to_string(), suffix: suffix.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExtractionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExtractionError::Config(format!("reading {}: {e}", path.display())))?;
        Self::new(&text)
    }

    pub fn text(&self) -> String {
        format!("{}{WINDOW_SLOT}{}", self.prefix, self.suffix)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_PROMPT).expect("bundled prompt template")
    }
}

/// Renders the prompt for one window.
pub fn build_prompt(window_text: &str, template: &PromptTemplate) -> Result<String, ExtractionError> {
    if window_text.trim().is_empty() {
        return Err(ExtractionError::EmptyWindow);
    }
    Ok(format!("{}{window_text}{}", template.prefix, template.suffix))
}

/// Byte offset just past the last case-insensitive occurrence of `marker`.
fn last_marker(lower: &str, marker: &str) -> Option<usize> {
    lower.rfind(&marker.to_ascii_lowercase()).map(|p| p + marker.len())
}

/// Text after `start` up to the end of the line, or up to `stop` when the
/// other marker begins later on the same line.
fn field(text: &str, start: usize, stop: Option<usize>) -> &str {
    let rest = &text[start..];
    let mut end = rest.find(['\n', '\r']).unwrap_or(rest.len());
    if let Some(s) = stop.filter(|&s| s > start) {
        end = end.min(s - start);
    }
    &rest[..end]
}

/// Parses a response with the default alias map.
pub fn parse_llm_response(text: &str) -> ExtractionResult {
    parse_llm_response_with(text, AliasMap::default_map())
}

/// Takes the value after the last `cryptocurrency:` and `Exchange:` markers
/// (case-insensitive) and normalizes both. `parse_ok` requires both markers.
pub fn parse_llm_response_with(text: &str, aliases: &AliasMap) -> ExtractionResult {
    // ASCII lowercasing keeps byte offsets aligned with `text`.
    let lower = text.to_ascii_lowercase();
    let coin_end = last_marker(&lower, COIN_MARKER);
    let exch_end = last_marker(&lower, EXCHANGE_MARKER);
    let coin_start = coin_end.map(|e| e - COIN_MARKER.len());
    let exch_start = exch_end.map(|e| e - EXCHANGE_MARKER.len());
    let coin = coin_end.map(|e| field(text, e, exch_start));
    let exchange = exch_end.map(|e| field(text, e, coin_start));
    ExtractionResult {
        coin: normalize_optional(coin, LexiconKind::Ticker, aliases),
        exchange: normalize_optional(exchange, LexiconKind::Exchange, aliases),
        method: ExtractionMethod::Llm,
        raw_response: Some(text.to_string()),
        parse_ok: coin_end.is_some() && exch_end.is_some(),
        retries: 0,
        elapsed_secs: 0.0,
    }
}

/// Failure of a single chat-completion call.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChatError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("server returned {status}: {body}")]
    Server { status: u16, body: String },
    #[error("authentication rejected ({0})")]
    Auth(u16),
    #[error("unusable response: {0}")]
    BadResponse(String),
}

impl ChatError {
    /// Transport failures, 5xx and 429 are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            ChatError::Transport(_) => true,
            ChatError::Server { status, .. } => *status >= 500 || *status == 429,
            ChatError::Auth(_) | ChatError::BadResponse(_) => false,
        }
    }
}

/// Sends one prompt and returns the model's reply text.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ChatError>;
}

/// Endpoint settings for [`HttpChatClient`].
#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub base_url: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

impl LlmConfig {
    /// Reads the token from `PUMPWATCH_LLM_TOKEN`.
    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Blocking chat-completion client.
pub struct HttpChatClient {
    config: LlmConfig,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(config: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatClient { config, agent }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }
}

/// Request body sent for `prompt`.
pub fn chat_request_body(model: &str, prompt: &str) -> serde_json::Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    })
}

/// Content of the first choice in a chat-completion response.
pub fn chat_response_content(body: &str) -> Result<String, ChatError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| ChatError::BadResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| ChatError::BadResponse("missing choices[0].message.content".into()))
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ChatError> {
        let mut req = self.agent.post(&self.config.endpoint()).header("content-type", "application/json");
        if let Some(t) = &self.config.token {
            req = req.header("authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(chat_request_body(&self.config.model, prompt))
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| ChatError::Transport(e.to_string()))?;
        match status {
            200..=299 => chat_response_content(&body),
            401 | 403 => Err(ChatError::Auth(status)),
            _ => Err(ChatError::Server { status, body }),
        }
    }
}

/// Retry schedule for [`llm_extract`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles for each further retry.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, backoff: Duration::from_millis(250) }
    }
}

/// Prompts the model for one window and parses the reply.
pub fn llm_extract(
    window_text: &str,
    client: &dyn ChatClient,
    template: &PromptTemplate,
    policy: &RetryPolicy,
) -> Result<ExtractionResult, ExtractionError> {
    llm_extract_with(window_text, client, template, policy, AliasMap::default_map())
}

pub fn llm_extract_with(
    window_text: &str,
    client: &dyn ChatClient,
    template: &PromptTemplate,
    policy: &RetryPolicy,
    aliases: &AliasMap,
) -> Result<ExtractionResult, ExtractionError> {
    let prompt = build_prompt(window_text, template)?;
    let started = Instant::now();
    let mut attempt = 0u32;
    loop {
        match client.complete(&prompt) {
            Ok(text) => {
                let mut r = parse_llm_response_with(&text, aliases);
                r.retries = attempt;
                r.elapsed_secs = started.elapsed().as_secs_f64();
                return Ok(r);
            }
            Err(ChatError::Auth(status)) => {
                return Err(ExtractionError::Config(format!("LLM endpoint rejected credentials ({status})")))
            }
            Err(e) if e.is_retryable() && attempt < policy.max_retries => {
                std::thread::sleep(policy.backoff * 2u32.saturating_pow(attempt));
                attempt += 1;
            }
            Err(e) => return Err(ExtractionError::Exhausted { attempts: attempt + 1, last: e.to_string() }),
        }
    }
}

/// Runs [`llm_extract`] over many windows with at most `concurrency`
/// requests in flight. Results keep the input order.
pub fn llm_extract_batch<K: Sync + Clone + Send>(
    windows: &[(K, String)],
    client: &dyn ChatClient,
    template: &PromptTemplate,
    policy: &RetryPolicy,
    concurrency: usize,
) -> Vec<(K, Result<ExtractionResult, ExtractionError>)> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ExtractionResult, ExtractionError>>>> =
        Mutex::new((0..windows.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..concurrency.clamp(1, windows.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((_, text)) = windows.get(i) else { break };
                let r = llm_extract(text, client, template, policy);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().expect("result slots");
    windows.iter().zip(slots).map(|((k, _), r)| (k.clone(), r.expect("every window processed"))).collect()
}

/// Returns the same reply for every prompt.
#[derive(Debug, Clone)]
pub struct FixedClient(pub String);

impl ChatClient for FixedClient {
    fn complete(&self, _prompt: &str) -> Result<String, ChatError> {
        Ok(self.0.clone())
    }
}

/// Replays a scripted sequence of outcomes, then repeats the last one.
#[derive(Debug)]
pub struct ScriptedClient {
    script: Mutex<VecDeque<Result<String, ChatError>>>,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn new(script: Vec<Result<String, ChatError>>) -> Self {
        assert!(!script.is_empty(), "script needs at least one outcome");
        ScriptedClient { script: Mutex::new(script.into()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, _prompt: &str) -> Result<String, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut q = self.script.lock().expect("script");
        if q.len() > 1 {
            q.pop_front().expect("non-empty")
        } else {
            q.front().cloned().expect("non-empty")
        }
    }
}
