use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, BufRead};

use thiserror::Error;

use super::tokenize::tokenize;
use super::SparseVector;

/// Default vocabulary cap.
pub const DEFAULT_MAX_FEATURES: usize = 20_000;

pub const TFIDF_HEADER: &str = "#pumpwatch-tfidf-v1";

#[derive(Debug, Error)]
pub enum TfidfError {
    #[error("no terms in training documents")]
    EmptyTrainingSet,
    #[error("max_features must be at least 1")]
    ZeroFeatures,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fitted unigram+bigram vocabulary with smoothed idf weights.
///
/// Column indices follow lexicographic term order. Bigrams are stored as
/// the two tokens joined by a single space.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocabulary: HashMap<String, u32>,
    terms: Vec<String>,
    idf: Vec<f64>,
    max_features: usize,
    fitted_on: usize,
}

/// Calls `f` on every unigram and bigram of `tokens`.
fn for_each_term(tokens: &[String], buf: &mut String, mut f: impl FnMut(&str)) {
    for (i, t) in tokens.iter().enumerate() {
        f(t);
        if let Some(next) = tokens.get(i + 1) {
            buf.clear();
            buf.push_str(t);
            buf.push(' ');
            buf.push_str(next);
            f(buf);
        }
    }
}

impl TfidfModel {
    /// Fits on training documents, keeping the `max_features` terms with the
    /// highest document frequency (ties broken lexicographically).
    pub fn fit<S: AsRef<str>>(docs: &[S], max_features: usize) -> Result<Self, TfidfError> {
        if max_features == 0 {
            return Err(TfidfError::ZeroFeatures);
        }
        // term -> (document frequency, last document seen)
        let mut df: HashMap<String, (u32, usize)> = HashMap::new();
        let mut buf = String::new();
        for (d, doc) in docs.iter().enumerate() {
            let tokens = tokenize(doc.as_ref());
            for_each_term(&tokens.0, &mut buf, |term| match df.get_mut(term) {
                Some((_, last)) if *last == d => {}
                Some((count, last)) => {
                    *count += 1;
                    *last = d;
                }
                None => {
                    df.insert(term.to_string(), (1, d));
                }
            });
        }
        if df.is_empty() {
            return Err(TfidfError::EmptyTrainingSet);
        }
        let mut ranked: Vec<(String, u32)> = df.into_iter().map(|(t, (c, _))| (t, c)).collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_features);
        ranked.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let n = docs.len() as f64;
        let mut model = TfidfModel {
            vocabulary: HashMap::with_capacity(ranked.len()),
            terms: Vec::with_capacity(ranked.len()),
            idf: Vec::with_capacity(ranked.len()),
            max_features,
            fitted_on: docs.len(),
        };
        for (i, (term, df)) in ranked.into_iter().enumerate() {
            model.idf.push(((1.0 + n) / (1.0 + df as f64)).ln() + 1.0);
            model.vocabulary.insert(term.clone(), i as u32);
            model.terms.push(term);
        }
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf[i as usize])
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// L2-normalized tf-idf vector of `text`; out-of-vocabulary terms are
    /// ignored and an all-OOV text maps to the zero vector.
    pub fn transform(&self, text: &str) -> SparseVector {
        let tokens = tokenize(text);
        let mut hits: Vec<u32> = Vec::with_capacity(tokens.len() * 2);
        let mut buf = String::with_capacity(32);
        for_each_term(&tokens.0, &mut buf, |term| {
            if let Some(&i) = self.vocabulary.get(term) {
                hits.push(i);
            }
        });
        hits.sort_unstable();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut i = 0;
        while i < hits.len() {
            let col = hits[i];
            let mut j = i;
            while j < hits.len() && hits[j] == col {
                j += 1;
            }
            indices.push(col);
            values.push((j - i) as f64 * self.idf[col as usize]);
            i = j;
        }
        let mut v = SparseVector { dim: self.len(), indices, values };
        v.normalize();
        v
    }

    /// Writes the `#pumpwatch-tfidf-v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 32);
        let _ = writeln!(s, "{TFIDF_HEADER}");
        let _ = writeln!(s, "max_features={}", self.max_features);
        let _ = writeln!(s, "fitted_on={}", self.fitted_on);
        let _ = writeln!(s, "terms={}", self.len());
        for (i, (t, idf)) in self.terms.iter().zip(&self.idf).enumerate() {
            let _ = writeln!(s, "{t}\t{i}\t{idf:.16e}");
        }
        s
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TfidfError> {
        let bad = |m: String| TfidfError::Format(m);
        let mut lines = reader.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim_end() == TFIDF_HEADER => {}
            _ => return Err(bad(format!("missing {TFIDF_HEADER} header"))),
        }
        let mut header = |key: &str| -> Result<usize, TfidfError> {
            let line = lines.next().transpose()?.ok_or_else(|| bad(format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(format!("bad header line `{line}`")))
        };
        let max_features = header("max_features")?;
        let fitted_on = header("fitted_on")?;
        let n = header("terms")?;
        let mut model = TfidfModel {
            vocabulary: HashMap::with_capacity(n),
            terms: Vec::with_capacity(n),
            idf: Vec::with_capacity(n),
            max_features,
            fitted_on,
        };
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(term), Some(idx), Some(idf), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(format!("bad term line `{line}`")));
            };
            let idx: usize = idx.parse().map_err(|_| bad(format!("bad index in `{line}`")))?;
            let idf: f64 = idf.parse().map_err(|_| bad(format!("bad idf in `{line}`")))?;
            if idx != model.terms.len() || !idf.is_finite() || idf <= 0.0 {
                return Err(bad(format!("inconsistent term line `{line}`")));
            }
            model.vocabulary.insert(term.to_string(), idx as u32);
            model.terms.push(term.to_string());
            model.idf.push(idf);
        }
        if model.terms.len() != n {
            return Err(bad(format!("expected {n} terms, found {}", model.terms.len())));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, TfidfError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_doc_idf() {
        let m = TfidfModel::fit(&["a b", "a c"], 100).unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(m.idf("a"), Some(1.0));
        let expect = (3.0f64 / 2.0).ln() + 1.0;
        for t in ["b", "c", "a b", "a c"] {
            assert!((m.idf(t).unwrap() - expect).abs() < 1e-15);
        }
        assert!((expect - 1.4055).abs() < 1e-4);
    }

    #[test]
    fn cap_keeps_most_frequent() {
        let m = TfidfModel::fit(&["a b", "a c"], 1).unwrap();
        assert_eq!(m.terms(), ["a"]);
        // Ties at df=1 resolve lexicographically.
        let m = TfidfModel::fit(&["a b", "a c"], 3).unwrap();
        assert_eq!(m.terms(), ["a", "a b", "a c"]);
    }

    #[test]
    fn empty_training_set_is_error() {
        assert!(matches!(TfidfModel::fit(&["", "  ", "!!"], 10), Err(TfidfError::EmptyTrainingSet)));
        let none: [&str; 0] = [];
        assert!(TfidfModel::fit(&none, 10).is_err());
        assert!(matches!(TfidfModel::fit(&["a"], 0), Err(TfidfError::ZeroFeatures)));
    }

    #[test]
    fn transform_known_and_unknown() {
        let m = TfidfModel::fit(&["a b", "a c"], 100).unwrap();
        let v = m.transform("a b");
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let z = m.transform("zz yy");
        assert!(z.is_empty());
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn persistence_is_bit_exact() {
        let m = TfidfModel::fit(&["buy $gmt on gate.io", "the coin will be", "will be announced soon"], 50).unwrap();
        let text = m.to_text();
        let back = TfidfModel::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(TfidfModel::from_reader("nope\n".as_bytes()).is_err());
        let m = TfidfModel::fit(&["a b"], 5).unwrap();
        let text = m.to_text().replace("\t1\t", "\t7\t");
        assert!(TfidfModel::from_reader(text.as_bytes()).is_err());
    }
}
