//! Coin and exchange extraction from flagged windows.

mod lexicon;
mod llm;
mod normalize;
mod rule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{AliasMap, Lexicon, LexiconKind};
pub use llm::{
    build_prompt, chat_request_body, chat_response_content, llm_extract, llm_extract_batch, llm_extract_with,
    parse_llm_response, parse_llm_response_with, ChatClient, ChatError, FixedClient, HttpChatClient, LlmConfig,
    PromptTemplate, RetryPolicy, ScriptedClient, COIN_MARKER, EXCHANGE_MARKER, TOKEN_ENV, WINDOW_SLOT,
};
pub use normalize::{normalize_entity, normalize_optional};
pub use rule::rule_extract;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("empty window text")]
    EmptyWindow,
    #[error("configuration: {0}")]
    Config(String),
    #[error("LLM request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    RuleBased,
    Llm,
}

impl ExtractionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionMethod::RuleBased => "rule_based",
            ExtractionMethod::Llm => "llm",
        }
    }
}

impl fmt::Display for ExtractionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule_based" | "rule" => Ok(ExtractionMethod::RuleBased),
            "llm" => Ok(ExtractionMethod::Llm),
            _ => Err(format!("unknown extraction method `{s}`")),
        }
    }
}

/// Extracted (coin, exchange) pair with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub coin: Option<String>,
    pub exchange: Option<String>,
    pub method: ExtractionMethod,
    /// Model reply, for LLM extraction only.
    pub raw_response: Option<String>,
    /// Whether both response markers were found.
    pub parse_ok: bool,
    /// Failed attempts before the successful request.
    pub retries: u32,
    /// Wall time spent, including retries.
    pub elapsed_secs: f64,
}
