//! Local chat-completion endpoint for tests and offline demos.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use pumpwatch::extraction::{rule_extract, Lexicon, PromptTemplate, COIN_MARKER, EXCHANGE_MARKER, WINDOW_SLOT};
use serde_json::{json, Value};

use crate::server::Background;

type Responder = dyn Fn(&str) -> Result<String, u16> + Send + Sync;

struct MockState {
    responder: Box<Responder>,
    calls: AtomicUsize,
}

/// A chat-completion server on an ephemeral local port. Stops on drop.
pub struct MockLlm {
    server: Background,
    state: Arc<MockState>,
}

/// Answers in the marker format by running the lexicon extractor on the
/// window part of a prompt built from the default template.
pub fn lexicon_responder() -> impl Fn(&str) -> Result<String, u16> + Send + Sync {
    let tickers = Lexicon::default_tickers();
    let exchanges = Lexicon::default_exchanges();
    let template = PromptTemplate::default().text();
    let (prefix, suffix) = template.split_once(WINDOW_SLOT).map(|(p, s)| (p.to_string(), s.to_string())).unwrap_or_default();
    move |prompt| {
        let window = prompt.strip_prefix(prefix.as_str()).unwrap_or(prompt);
        let window = window.strip_suffix(suffix.as_str()).unwrap_or(window);
        let r = rule_extract(window, &tickers, &exchanges);
        let show = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        Ok(format!("{COIN_MARKER} {}\n{EXCHANGE_MARKER} {}", show(r.coin), show(r.exchange)))
    }
}

async fn complete(State(state): State<Arc<MockState>>, Json(body): Json<Value>) -> Response {
    state.calls.fetch_add(1, Ordering::SeqCst);
    let prompt = body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or_default();
    match (state.responder)(prompt) {
        Ok(content) => Json(json!({
            "object": "chat.completion",
            "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }],
        }))
        .into_response(),
        Err(status) => {
            let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, "mock failure").into_response()
        }
    }
}

impl MockLlm {
    /// `responder` maps a prompt to reply content or an HTTP error status.
    pub fn start<F>(responder: F) -> std::io::Result<Self>
    where
        F: Fn(&str) -> Result<String, u16> + Send + Sync + 'static,
    {
        let state = Arc::new(MockState { responder: Box::new(responder), calls: AtomicUsize::new(0) });
        let app = Router::new()
            .route("/v1/chat/completions", post(complete))
            .route("/chat/completions", post(complete))
            .with_state(state.clone());
        Ok(MockLlm { server: Background::spawn(app, "127.0.0.1:0")?, state })
    }

    /// Base URL to put in `llm_base_url`.
    pub fn base_url(&self) -> String {
        format!("{}/v1", self.server.base_url())
    }

    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }
}
