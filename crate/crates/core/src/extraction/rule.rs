use super::lexicon::Lexicon;
use super::{ExtractionMethod, ExtractionResult};
use crate::features::tokenize;

fn match_key(token: &str) -> &str {
    token.trim_start_matches(['$', '#'])
}

/// First-match lexicon baseline: the first token found in the ticker
/// lexicon is the coin and the first found in the exchange lexicon is the
/// exchange. There is deliberately no disambiguation, so common words such
/// as `for` are matched when they are listed tickers.
pub fn rule_extract(window_text: &str, tickers: &Lexicon, exchanges: &Lexicon) -> ExtractionResult {
    let tokens = tokenize(window_text).0;
    let keys: Vec<&str> = tokens.iter().map(|t| match_key(t)).collect();
    let coin = keys.iter().find(|k| !k.is_empty() && tickers.contains(k)).map(|k| k.to_string());
    let mut exchange = None;
    'scan: for i in 0..keys.len() {
        // Longest multi-word name starting here wins.
        for n in (1..=exchanges.max_words().min(keys.len() - i)).rev() {
            let cand = keys[i..i + n].join(" ");
            if exchanges.contains(&cand) {
                exchange = Some(cand);
                break 'scan;
            }
        }
    }
    ExtractionResult {
        coin,
        exchange,
        method: ExtractionMethod::RuleBased,
        raw_response: None,
        parse_ok: true,
        retries: 0,
        elapsed_secs: 0.0,
    }
}
