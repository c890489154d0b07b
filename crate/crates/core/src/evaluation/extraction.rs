use super::EvalError;
use crate::extraction::{normalize_optional, AliasMap, ExtractionResult, LexiconKind};

/// Field and joint accuracy of extracted (coin, exchange) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport {
    pub coin_accuracy: f64,
    pub exchange_accuracy: f64,
    pub joint_accuracy: f64,
    /// Mean recorded wall time per sample.
    pub seconds_per_sample: f64,
    pub n_samples: usize,
}

/// Compares predictions with gold labels after normalizing both sides. A
/// missing prediction for a missing gold value counts as correct.
pub fn extraction_accuracy(
    predictions: &[ExtractionResult],
    gold: &[(Option<String>, Option<String>)],
    aliases: &AliasMap,
) -> Result<ExtractionReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch { left: predictions.len(), right: gold.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty("extraction samples"));
    }
    let norm = |s: Option<&String>, kind| normalize_optional(s.map(String::as_str), kind, aliases);
    let (mut coin, mut exch, mut joint) = (0usize, 0usize, 0usize);
    let mut secs = 0.0;
    for (p, (gc, ge)) in predictions.iter().zip(gold) {
        let c = norm(p.coin.as_ref(), LexiconKind::Ticker) == norm(gc.as_ref(), LexiconKind::Ticker);
        let e = norm(p.exchange.as_ref(), LexiconKind::Exchange) == norm(ge.as_ref(), LexiconKind::Exchange);
        coin += c as usize;
        exch += e as usize;
        joint += (c && e) as usize;
        secs += p.elapsed_secs;
    }
    let n = predictions.len() as f64;
    Ok(ExtractionReport {
        coin_accuracy: coin as f64 / n,
        exchange_accuracy: exch as f64 / n,
        joint_accuracy: joint as f64 / n,
        seconds_per_sample: secs / n,
        n_samples: predictions.len(),
    })
}
