//! Alerts and their review state machine.

use std::fmt;
use std::str::FromStr;

use pumpwatch::ExtractionResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertStatus {
    Pending,
    Confirmed,
    Rejected,
    Corrected,
}

impl AlertStatus {
    pub const ALL: [AlertStatus; 4] = [AlertStatus::Pending, AlertStatus::Confirmed, AlertStatus::Rejected, AlertStatus::Corrected];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertStatus::Pending => "pending",
            AlertStatus::Confirmed => "confirmed",
            AlertStatus::Rejected => "rejected",
            AlertStatus::Corrected => "corrected",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != AlertStatus::Pending
    }
}

impl fmt::Display for AlertStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlertStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AlertStatus::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown status `{s}` (expected pending|confirmed|rejected|corrected)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Confirmed,
    Rejected,
    Corrected,
}

impl Decision {
    pub fn status(self) -> AlertStatus {
        match self {
            Decision::Confirmed => AlertStatus::Confirmed,
            Decision::Rejected => AlertStatus::Rejected,
            Decision::Corrected => AlertStatus::Corrected,
        }
    }
}

/// An analyst's verdict on one alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<String>,
    /// UTC epoch seconds.
    pub reviewed_at: i64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReviewError {
    #[error("alert {0} not found")]
    NotFound(String),
    #[error("alert {id} was already reviewed ({status})")]
    Conflict { id: String, status: AlertStatus },
    #[error("a correction must change the coin or the exchange")]
    EmptyCorrection,
}

/// A flagged window with its extraction and review state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub alert_id: String,
    /// Store insertion order, starting at 1; 0 until stored.
    #[serde(default)]
    pub seq: u64,
    pub group_id: String,
    pub msg_id: u64,
    /// Position of the center message in its group stream.
    pub center_index: usize,
    pub center_timestamp: i64,
    pub center_text: String,
    pub window_text: String,
    pub score: f64,
    pub threshold: f64,
    pub model_version: String,
    pub extraction: ExtractionResult,
    /// Rule-based result kept next to the LLM one in `both` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_extraction: Option<ExtractionResult>,
    /// UTC epoch seconds.
    pub created_at: i64,
    pub status: AlertStatus,
    pub review_required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<Review>,
}

/// Content-addressed id, so replaying a stream yields the same ids.
pub fn alert_id(group_id: &str, msg_id: u64, model_version: &str) -> String {
    let mut h = Sha256::new();
    for part in [group_id.as_bytes(), &msg_id.to_be_bytes(), model_version.as_bytes()] {
        h.update((part.len() as u64).to_be_bytes());
        h.update(part);
    }
    h.finalize().iter().take(10).map(|b| format!("{b:02x}")).collect()
}

/// Deterministic review sampling: the alert is required-review when a
/// seeded hash of its id falls below `rate`.
pub fn review_required(alert_id: &str, seed: u64, rate: f64) -> bool {
    if rate >= 1.0 {
        return true;
    }
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(alert_id.as_bytes());
    let d = h.finalize();
    let x = u64::from_be_bytes(d[..8].try_into().expect("8 bytes"));
    ((x >> 11) as f64 / (1u64 << 53) as f64) < rate
}

impl AlertEvent {
    /// Coin after review: a correction's value wins over the extractor's.
    pub fn final_coin(&self) -> Option<&str> {
        match &self.review {
            Some(Review { decision: Decision::Corrected, coin: Some(c), .. }) => Some(c),
            _ => self.extraction.coin.as_deref(),
        }
    }

    pub fn final_exchange(&self) -> Option<&str> {
        match &self.review {
            Some(Review { decision: Decision::Corrected, exchange: Some(e), .. }) => Some(e),
            _ => self.extraction.exchange.as_deref(),
        }
    }

    /// Moves a pending alert to the review's terminal status.
    pub fn apply_review(&mut self, review: Review) -> Result<(), ReviewError> {
        if self.status.is_terminal() {
            return Err(ReviewError::Conflict { id: self.alert_id.clone(), status: self.status });
        }
        if review.decision == Decision::Corrected {
            let blank = |v: &Option<String>| v.as_deref().is_none_or(|s| s.trim().is_empty());
            if blank(&review.coin) && blank(&review.exchange) {
                return Err(ReviewError::EmptyCorrection);
            }
        }
        let mut review = review;
        let clean = |v: Option<String>| v.map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty());
        review.coin = clean(review.coin);
        review.exchange = clean(review.exchange);
        self.status = review.decision.status();
        self.review = Some(review);
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use pumpwatch::ExtractionMethod;

    pub(crate) fn sample(id_seed: u64) -> AlertEvent {
        AlertEvent {
            alert_id: alert_id("g", id_seed, "v1"),
            seq: 0,
            group_id: "g".into(),
            msg_id: id_seed,
            center_index: id_seed as usize,
            center_timestamp: 1_000 + id_seed as i64,
            center_text: "buy $FOR now".into(),
            window_text: "pump soon\nbuy $FOR now".into(),
            score: 0.9,
            threshold: 0.5,
            model_version: "v1".into(),
            extraction: ExtractionResult {
                coin: Some("for".into()),
                exchange: Some("binance".into()),
                method: ExtractionMethod::RuleBased,
                raw_response: None,
                parse_ok: true,
                retries: 0,
                elapsed_secs: 0.0,
            },
            secondary_extraction: None,
            created_at: 5,
            status: AlertStatus::Pending,
            review_required: true,
            review: None,
        }
    }

    fn review(decision: Decision, coin: Option<&str>) -> Review {
        Review { decision, coin: coin.map(String::from), exchange: None, reviewed_at: 9 }
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        assert_eq!(alert_id("g", 1, "v"), alert_id("g", 1, "v"));
        assert_ne!(alert_id("g", 1, "v"), alert_id("g", 2, "v"));
        assert_ne!(alert_id("g", 1, "v"), alert_id("g", 1, "w"));
        assert_ne!(alert_id("ab", 1, "c"), alert_id("a", 1, "bc"));
        assert_eq!(alert_id("g", 1, "v").len(), 20);
    }

    #[test]
    fn terminal_states_admit_no_transition() {
        for first in [Decision::Confirmed, Decision::Rejected, Decision::Corrected] {
            let mut a = sample(1);
            a.apply_review(review(first, Some("gmt"))).unwrap();
            assert_eq!(a.status, first.status());
            for second in [Decision::Confirmed, Decision::Rejected, Decision::Corrected] {
                let before = a.clone();
                assert!(matches!(a.apply_review(review(second, Some("x"))), Err(ReviewError::Conflict { .. })));
                assert_eq!(a, before);
            }
        }
    }

    #[test]
    fn correction_overrides_extraction() {
        let mut a = sample(1);
        assert_eq!(a.apply_review(review(Decision::Corrected, Some("  "))), Err(ReviewError::EmptyCorrection));
        a.apply_review(review(Decision::Corrected, Some("GMT"))).unwrap();
        assert_eq!(a.final_coin(), Some("gmt"));
        assert_eq!(a.final_exchange(), Some("binance"));
        let mut b = sample(2);
        b.apply_review(review(Decision::Confirmed, Some("ignored"))).unwrap();
        assert_eq!(b.final_coin(), Some("for"));
    }

    #[test]
    fn sampling_rate_is_respected() {
        assert!((0..100).all(|i| review_required(&i.to_string(), 3, 1.0)));
        assert!((0..100).all(|i| !review_required(&i.to_string(), 3, 0.0)));
        let hits = (0..4000).filter(|i| review_required(&i.to_string(), 3, 0.25)).count();
        assert!((800..1200).contains(&hits), "{hits}");
        assert_eq!(review_required("a", 1, 0.5), review_required("a", 1, 0.5));
    }

    #[test]
    fn json_round_trip() {
        let mut a = sample(4);
        a.apply_review(review(Decision::Corrected, Some("gmt"))).unwrap();
        let back: AlertEvent = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
