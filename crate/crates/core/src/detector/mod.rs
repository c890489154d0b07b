//! Gradient-boosted tree detector over sparse TF-IDF windows.

mod bench;
mod model;
mod threshold;
mod train;

use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use bench::{bench_inference, bench_scoring, LatencyReport, CLOCK_SOURCE};
pub use model::{sigmoid, GbdtModel, Node, Tree, GBDT_HEADER};
pub use threshold::{candidate_thresholds, select_threshold, tune_threshold, ThresholdChoice, ThresholdObjective};
pub use train::{train_gbdt, train_gbdt_traced, TrainTrace};

use crate::features::{SparseVector, TfidfError, TfidfModel};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("single-class training set")]
    SingleClass,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{x} feature rows but {y} labels")]
    LengthMismatch { x: usize, y: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("row {row} has dimension {got}, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("row {row} has a NaN or infinite feature value")]
    NonFiniteFeature { row: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("feature index {index} out of range for {feature_count} features")]
    FeatureOutOfRange { index: usize, feature_count: usize },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("invalid threshold objective: {0}")]
    InvalidObjective(String),
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("threshold already set")]
    ThresholdAlreadySet,
    #[error("empty input")]
    EmptyInput,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub max_leaves: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Fraction of features eligible for splitting in each tree.
    pub feature_subsample: f64,
    pub seed: u64,
    /// Inverse-frequency class weights `N / (2 N_c)`.
    pub class_weighting: bool,
    /// Histogram bins per feature for split search.
    pub max_bins: usize,
    /// L2 penalty on leaf values.
    pub l2_regularization: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_trees: 200,
            max_leaves: 31,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            feature_subsample: 1.0,
            seed: 0,
            class_weighting: true,
            max_bins: 32,
            l2_regularization: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if self.num_trees < 1 {
            return bad("num_trees must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be >= 2");
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return bad("feature_subsample must be in (0, 1]");
        }
        if self.max_bins < 2 || self.max_bins > u32::MAX as usize {
            return bad("max_bins must be >= 2");
        }
        if !(self.l2_regularization >= 0.0 && self.l2_regularization.is_finite()) {
            return bad("l2_regularization must be finite and >= 0");
        }
        Ok(())
    }
}

/// Scores window text as a pump-start probability.
pub trait Detector: Send + Sync {
    fn score(&self, window_text: &str) -> f64;

    fn threshold(&self) -> f64;

    fn classify(&self, window_text: &str) -> bool {
        self.score(window_text) >= self.threshold()
    }

    /// Stable identifier of the underlying model artifacts.
    fn version(&self) -> &str;
}

/// TF-IDF vectorizer followed by a boosted tree ensemble.
#[derive(Debug, Clone)]
pub struct TfidfGbdtDetector {
    tfidf: TfidfModel,
    model: GbdtModel,
    version: String,
}

pub const TFIDF_FILE: &str = "tfidf.txt";
pub const GBDT_FILE: &str = "gbdt.txt";

impl TfidfGbdtDetector {
    pub fn new(tfidf: TfidfModel, model: GbdtModel) -> Self {
        let mut h = Sha256::new();
        h.update(tfidf.to_text());
        h.update(model.to_text());
        let version = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
        TfidfGbdtDetector { tfidf, model, version }
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }

    pub fn model(&self) -> &GbdtModel {
        &self.model
    }

    pub fn featurize(&self, text: &str) -> SparseVector {
        self.tfidf.transform(text)
    }

    pub fn score_vector(&self, x: &SparseVector) -> Result<f64, DetectorError> {
        self.model.predict_score(x)
    }

    /// Writes `tfidf.txt` and `gbdt.txt` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        self.tfidf.save(dir.join(TFIDF_FILE))?;
        self.model.save(dir.join(GBDT_FILE))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DetectorError> {
        let dir = dir.as_ref();
        let tfidf = TfidfModel::load(dir.join(TFIDF_FILE))?;
        let model = GbdtModel::load(dir.join(GBDT_FILE))?;
        if model.feature_count != tfidf.len() {
            return Err(DetectorError::Format(format!(
                "model expects {} features, vectorizer has {}",
                model.feature_count,
                tfidf.len()
            )));
        }
        Ok(Self::new(tfidf, model))
    }
}

impl Detector for TfidfGbdtDetector {
    fn score(&self, window_text: &str) -> f64 {
        // The vectorizer only emits in-range indices.
        self.model.score_unchecked(&self.tfidf.transform(window_text))
    }

    fn threshold(&self) -> f64 {
        self.model.threshold()
    }

    fn version(&self) -> &str {
        &self.version
    }
}
