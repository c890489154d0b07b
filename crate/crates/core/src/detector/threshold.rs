use std::fmt;
use std::str::FromStr;

use super::{DetectorError, GbdtModel};
use crate::features::SparseVector;

/// Rule for picking the decision threshold on validation scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdObjective {
    /// Maximize F1; ties go to the lower threshold.
    MaxF1,
    /// Largest threshold whose recall is at least the given value.
    MinRecallAt(f64),
}

impl Default for ThresholdObjective {
    fn default() -> Self {
        ThresholdObjective::MaxF1
    }
}

impl fmt::Display for ThresholdObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdObjective::MaxF1 => write!(f, "max_f1"),
            ThresholdObjective::MinRecallAt(r) => write!(f, "min_recall_at({r})"),
        }
    }
}

impl FromStr for ThresholdObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "max_f1" {
            return Ok(ThresholdObjective::MaxF1);
        }
        let inner = s
            .strip_prefix("min_recall_at(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("min_recall_at:"))
            .ok_or_else(|| format!("unknown threshold objective `{s}`"))?;
        let r: f64 = inner.trim().parse().map_err(|_| format!("bad recall in `{s}`"))?;
        if !(0.0..=1.0).contains(&r) {
            return Err(format!("recall {r} outside [0, 1]"));
        }
        Ok(ThresholdObjective::MinRecallAt(r))
    }
}

/// Selected operating point with its validation metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Candidate thresholds: the lowest score, then the midpoint between each
/// pair of adjacent unique scores. Candidate `j` flags exactly the scores
/// `>= unique[j]`.
pub fn candidate_thresholds(unique_sorted: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(unique_sorted.len());
    for (j, &u) in unique_sorted.iter().enumerate() {
        if j == 0 {
            out.push(u);
        } else {
            let lo = unique_sorted[j - 1];
            let m = lo + (u - lo) / 2.0;
            out.push(if m > lo { m } else { u });
        }
    }
    out
}

/// Picks a threshold from raw validation scores.
pub fn select_threshold(scores: &[f64], labels: &[u8], objective: ThresholdObjective) -> Result<ThresholdChoice, DetectorError> {
    if scores.len() != labels.len() {
        return Err(DetectorError::LengthMismatch { x: scores.len(), y: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(DetectorError::NonFiniteScore);
    }
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 || total_pos == labels.len() {
        return Err(DetectorError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Per unique score: (value, positives, negatives).
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &i in &order {
        let s = scores[i];
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if labels[i] == 1 { g.1 += 1 } else { g.2 += 1 }
            }
            _ => groups.push((s, (labels[i] == 1) as usize, (labels[i] != 1) as usize)),
        }
    }
    let unique: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let cands = candidate_thresholds(&unique);
    // Suffix counts: flagged positives/negatives at candidate j.
    let m = groups.len();
    let mut tp = vec![0usize; m + 1];
    let mut fp = vec![0usize; m + 1];
    for j in (0..m).rev() {
        tp[j] = tp[j + 1] + groups[j].1;
        fp[j] = fp[j + 1] + groups[j].2;
    }
    let choice = |j: usize| {
        let (t, f) = (tp[j] as f64, fp[j] as f64);
        let fnn = (total_pos - tp[j]) as f64;
        let precision = if tp[j] + fp[j] == 0 { 0.0 } else { t / (t + f) };
        ThresholdChoice {
            threshold: cands[j],
            precision,
            recall: t / total_pos as f64,
            f1: 2.0 * t / (2.0 * t + f + fnn),
        }
    };
    let j = match objective {
        ThresholdObjective::MaxF1 => {
            let mut best = 0;
            let mut best_f1 = choice(0).f1;
            for j in 1..m {
                let f1 = choice(j).f1;
                if f1 > best_f1 {
                    best = j;
                    best_f1 = f1;
                }
            }
            best
        }
        ThresholdObjective::MinRecallAt(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(DetectorError::InvalidObjective(objective.to_string()));
            }
            (0..m).rev().find(|&j| tp[j] as f64 / total_pos as f64 >= r).unwrap_or(0)
        }
    };
    Ok(choice(j))
}

/// Scores the validation set and fixes the model threshold.
pub fn tune_threshold(
    mut model: GbdtModel,
    x_val: &[SparseVector],
    y_val: &[u8],
    objective: ThresholdObjective,
) -> Result<(GbdtModel, ThresholdChoice), DetectorError> {
    let scores = x_val.iter().map(|x| model.predict_score(x)).collect::<Result<Vec<_>, _>>()?;
    let choice = select_threshold(&scores, y_val, objective)?;
    // Scores of 0 would give a threshold outside (0,1); nudge into range.
    let t = choice.threshold.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    model.set_threshold(t)?;
    Ok((model, ThresholdChoice { threshold: t, ..choice }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_picks_midpoint() {
        let c = select_threshold(&[0.1, 0.9], &[0, 1], ThresholdObjective::MaxF1).unwrap();
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.f1, 1.0);
    }

    #[test]
    fn four_point_example() {
        let c = select_threshold(&[0.2, 0.4, 0.6, 0.8], &[0, 1, 0, 1], ThresholdObjective::MaxF1).unwrap();
        assert!((c.f1 - 0.8).abs() < 1e-12);
        assert!(c.threshold > 0.2 && c.threshold <= 0.4);
    }

    #[test]
    fn full_recall_flags_every_positive() {
        let s = [0.05, 0.3, 0.35, 0.7, 0.9];
        let y = [0, 1, 0, 1, 1];
        let c = select_threshold(&s, &y, ThresholdObjective::MinRecallAt(1.0)).unwrap();
        assert!(c.threshold <= 0.3);
        assert_eq!(c.recall, 1.0);
        let c = select_threshold(&s, &y, ThresholdObjective::MinRecallAt(0.5)).unwrap();
        assert!(c.recall >= 0.5);
        assert!(c.threshold > 0.35);
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(select_threshold(&[0.1, 0.2], &[1, 1], ThresholdObjective::MaxF1), Err(DetectorError::SingleClass)));
    }

    #[test]
    fn objective_parsing() {
        assert_eq!("max_f1".parse::<ThresholdObjective>().unwrap(), ThresholdObjective::MaxF1);
        assert_eq!("min_recall_at(0.9)".parse::<ThresholdObjective>().unwrap(), ThresholdObjective::MinRecallAt(0.9));
        assert!("min_recall_at(2)".parse::<ThresholdObjective>().is_err());
        assert_eq!(ThresholdObjective::MinRecallAt(0.9).to_string(), "min_recall_at(0.9)");
    }

    #[test]
    fn adjacent_floats_keep_flag_sets_exact() {
        let a = 0.5f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let c = candidate_thresholds(&[a, b]);
        assert!(c[1] > a && c[1] <= b);
    }
}
