use std::collections::{BTreeMap, HashMap};

use super::EvalError;
use crate::windowing::WindowKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn from_predictions(predicted: &[bool], labels: &[u8]) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l == 1) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        cm
    }

    /// Thresholds scores with `score >= threshold`.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let pred: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
        Self::from_predictions(&pred, labels)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Pump-class metrics; `undefined` names any ratio whose denominator was
/// zero (reported as 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub roc_auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub threshold: Option<f64>,
    pub undefined: Vec<&'static str>,
}

fn ratio(num: u64, den: u64, name: &'static str, undefined: &mut Vec<&'static str>) -> f64 {
    if den == 0 {
        undefined.push(name);
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn detection_metrics(cm: &ConfusionMatrix) -> DetectionReport {
    let mut undefined = Vec::new();
    let precision = ratio(cm.tp, cm.tp + cm.fp, "precision", &mut undefined);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, "recall", &mut undefined);
    let specificity = ratio(cm.tn, cm.tn + cm.fp, "specificity", &mut undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1");
        0.0
    };
    DetectionReport {
        precision,
        recall,
        f1,
        balanced_accuracy: (recall + specificity) / 2.0,
        roc_auc: None,
        confusion: *cm,
        threshold: None,
        undefined,
    }
}

/// Probability that a random positive outscores a random negative, with
/// ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Invalid("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the win count, kept exact in integers.
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut pos, mut neg) = (0u128, 0u128);
        let mut j = i;
        while j < order.len() && scores[order[j]] == s {
            if labels[order[j]] == 1 { pos += 1 } else { neg += 1 }
            j += 1;
        }
        twice_wins += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_wins as f64 / (2 * n_pos * n_neg) as f64)
}

/// Event-level delay between annotated pump starts and the first positive
/// window at or after them.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayReport {
    /// One entry per event; `None` when no later window fired.
    pub delays: Vec<Option<usize>>,
    pub histogram: BTreeMap<usize, usize>,
    pub missed: usize,
    pub frac_at_0: f64,
    pub frac_within_5: f64,
}

impl DelayReport {
    pub fn events(&self) -> usize {
        self.delays.len()
    }
}

/// `predictions` maps window keys to 0/1; `events` are (group, message
/// index) of pump starts.
pub fn event_delay(predictions: &HashMap<WindowKey, u8>, events: &[(String, usize)]) -> DelayReport {
    let mut positives: HashMap<&str, Vec<usize>> = HashMap::new();
    for ((g, c), &p) in predictions {
        if p == 1 {
            positives.entry(g.as_str()).or_default().push(*c);
        }
    }
    for v in positives.values_mut() {
        v.sort_unstable();
    }
    let delays: Vec<Option<usize>> = events
        .iter()
        .map(|(g, p)| {
            let v = positives.get(g.as_str())?;
            let i = v.partition_point(|&c| c < *p);
            v.get(i).map(|&c| c - p)
        })
        .collect();
    let mut histogram = BTreeMap::new();
    for d in delays.iter().flatten() {
        *histogram.entry(*d).or_insert(0) += 1;
    }
    let n = delays.len();
    let count = |pred: &dyn Fn(usize) -> bool| delays.iter().flatten().filter(|&&d| pred(d)).count();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    DelayReport {
        missed: delays.iter().filter(|d| d.is_none()).count(),
        frac_at_0: frac(count(&|d| d == 0)),
        frac_within_5: frac(count(&|d| d <= 5)),
        histogram,
        delays,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dp(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn published_confusion_matrices() {
        let a = detection_metrics(&ConfusionMatrix::new(3334, 1394, 436, 51354));
        // The counts give F1 = 6668/8498 = 0.7846, which rounds to 0.78.
        assert_eq!((two_dp(a.precision), two_dp(a.recall), two_dp(a.f1)), (0.71, 0.88, 0.78));
        assert!((a.f1 - 6668.0 / 8498.0).abs() < 1e-15);
        let b = detection_metrics(&ConfusionMatrix::new(2942, 369, 828, 52379));
        assert_eq!((two_dp(b.precision), two_dp(b.recall), two_dp(b.f1)), (0.89, 0.78, 0.83));
    }

    #[test]
    fn perfect_and_degenerate() {
        let r = detection_metrics(&ConfusionMatrix::new(5, 0, 0, 7));
        assert_eq!((r.precision, r.recall, r.f1, r.balanced_accuracy), (1.0, 1.0, 1.0, 1.0));
        assert!(r.undefined.is_empty());
        let r = detection_metrics(&ConfusionMatrix::new(0, 0, 3, 7));
        assert_eq!(r.f1, 0.0);
        assert!(r.undefined.contains(&"precision") && r.undefined.contains(&"f1"));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[1.0, 1.0, 0.0], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn delay_examples() {
        let mut p = HashMap::new();
        for c in 0..20 {
            p.insert(("g".to_string(), c), (c == 13) as u8);
        }
        let r = event_delay(&p, &[("g".to_string(), 10)]);
        assert_eq!(r.delays, vec![Some(3)]);
        assert_eq!((r.frac_at_0, r.frac_within_5), (0.0, 1.0));

        let all: HashMap<_, _> = (0..20).map(|c| (("g".to_string(), c), 1u8)).collect();
        let r = event_delay(&all, &[("g".to_string(), 4), ("g".to_string(), 11)]);
        assert_eq!(r.frac_at_0, 1.0);

        let r = event_delay(&p, &[("g".to_string(), 14), ("h".to_string(), 0)]);
        assert_eq!(r.missed, 2);
    }
}
