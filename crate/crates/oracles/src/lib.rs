//! Slow, obviously-correct reference implementations for cross-checking.
//!
//! Everything here favours directness over speed: quadratic loops, linear
//! searches and no shared code with the main crate.

/// Unigrams and space-joined bigrams of a token list, in order.
pub fn ngrams(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        out.push(tokens[i].clone());
        if i + 1 < tokens.len() {
            out.push(format!("{} {}", tokens[i], tokens[i + 1]));
        }
    }
    out
}

/// Vocabulary (lexicographic) and smoothed idf of pre-tokenized documents,
/// keeping the `max_features` most frequent terms by document frequency
/// with ties broken lexicographically.
pub fn tfidf_fit(docs: &[Vec<String>], max_features: usize) -> (Vec<String>, Vec<f64>) {
    let grams: Vec<Vec<String>> = docs.iter().map(|d| ngrams(d)).collect();
    let mut terms: Vec<String> = Vec::new();
    for g in &grams {
        for t in g {
            if !terms.contains(t) {
                terms.push(t.clone());
            }
        }
    }
    let df = |t: &String| grams.iter().filter(|g| g.contains(t)).count();
    let mut ranked: Vec<(String, usize)> = terms.iter().map(|t| (t.clone(), df(t))).collect();
    // Selection by repeated minimum keeps this independent of sort keys.
    let mut chosen: Vec<(String, usize)> = Vec::new();
    while chosen.len() < max_features && !ranked.is_empty() {
        let mut best = 0;
        for i in 1..ranked.len() {
            let (ref t, d) = ranked[i];
            let (ref bt, bd) = ranked[best];
            if d > bd || (d == bd && t < bt) {
                best = i;
            }
        }
        chosen.push(ranked.remove(best));
    }
    chosen.sort_by(|a, b| a.0.cmp(&b.0));
    let n = docs.len() as f64;
    let idf = chosen.iter().map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0).collect();
    (chosen.into_iter().map(|(t, _)| t).collect(), idf)
}

/// Dense L2-normalized tf-idf vector of one pre-tokenized document.
pub fn tfidf_vector(terms: &[String], idf: &[f64], doc: &[String]) -> Vec<f64> {
    let grams = ngrams(doc);
    let mut v: Vec<f64> = terms
        .iter()
        .zip(idf)
        .map(|(t, w)| grams.iter().filter(|g| *g == t).count() as f64 * w)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Fraction of (positive, negative) pairs where the positive scores higher,
/// ties counting one half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for i in 0..scores.len() {
        if labels[i] != 1 {
            continue;
        }
        for j in 0..scores.len() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Counts and derived metrics of a labelled prediction set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn from_predictions(pred: &[bool], labels: &[u8]) -> Self {
        let mut c = Counts { tp: 0, fp: 0, fn_: 0, tn: 0 };
        for (&p, &l) in pred.iter().zip(labels) {
            match (p, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    fn ratio(a: u64, b: u64) -> f64 {
        if b == 0 { 0.0 } else { a as f64 / b as f64 }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    /// F1 from its definition over counts: 2tp / (2tp + fp + fn).
    pub fn f1(&self) -> f64 {
        Self::ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        Self::ratio(self.tn, self.tn + self.fp)
    }

    pub fn balanced_accuracy(&self) -> f64 {
        (self.recall() + self.specificity()) / 2.0
    }
}

/// One interval of thresholds over which the flagged set is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    /// Exclusive lower end (`-inf` for the lowest region).
    pub lo: f64,
    /// Inclusive upper end (`+inf` for the region above every score).
    pub hi: f64,
    pub counts: Counts,
}

/// Every threshold region of `scores >= t`, from lowest to highest.
pub fn threshold_regions(scores: &[f64], labels: &[u8]) -> Vec<Region> {
    let mut uniq: Vec<f64> = Vec::new();
    for &s in scores {
        if !uniq.contains(&s) {
            uniq.push(s);
        }
    }
    uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::new();
    let mut lo = f64::NEG_INFINITY;
    for &u in &uniq {
        let pred: Vec<bool> = scores.iter().map(|&s| s >= u).collect();
        out.push(Region { lo, hi: u, counts: Counts::from_predictions(&pred, labels) });
        lo = u;
    }
    let none = vec![false; scores.len()];
    out.push(Region { lo, hi: f64::INFINITY, counts: Counts::from_predictions(&none, labels) });
    out
}

/// Best F1 over all regions and the lowest region achieving it.
pub fn best_f1_region(scores: &[f64], labels: &[u8]) -> Region {
    let regions = threshold_regions(scores, labels);
    let mut best = regions[0];
    for r in &regions[1..] {
        if r.counts.f1() > best.counts.f1() {
            best = *r;
        }
    }
    best
}

/// Highest region whose recall is at least `r`.
pub fn min_recall_region(scores: &[f64], labels: &[u8], r: f64) -> Option<Region> {
    threshold_regions(scores, labels).into_iter().rev().find(|g| g.counts.recall() >= r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn auc_example() {
        assert_eq!(pairwise_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), Some(0.75));
        assert_eq!(pairwise_auc(&[0.3, 0.3], &[0, 1]), Some(0.5));
        assert_eq!(pairwise_auc(&[0.3], &[1]), None);
    }

    #[test]
    fn regions_example() {
        let r = threshold_regions(&[0.2, 0.4, 0.6, 0.8], &[0, 1, 0, 1]);
        assert_eq!(r.len(), 5);
        let best = best_f1_region(&[0.2, 0.4, 0.6, 0.8], &[0, 1, 0, 1]);
        assert!((best.counts.f1() - 0.8).abs() < 1e-12);
        assert_eq!((best.lo, best.hi), (0.2, 0.4));
    }

    #[test]
    fn tfidf_example() {
        let (terms, idf) = tfidf_fit(&[toks("a b"), toks("a c")], 10);
        assert_eq!(terms, ["a", "a b", "a c", "b", "c"]);
        assert_eq!(idf[0], 1.0);
        let v = tfidf_vector(&terms, &idf, &toks("a a"));
        assert!((v[0] - 1.0).abs() < 1e-12);
    }
}
