//! Train and evaluate a windowed TF-IDF + GBDT detector end to end.

use thiserror::Error;

use crate::corpus::GroupCorpus;
use crate::detector::{
    train_gbdt, tune_threshold, Detector, DetectorError, TfidfGbdtDetector, ThresholdChoice, ThresholdObjective,
    TrainConfig,
};
use crate::evaluation::{detection_metrics, roc_auc, ConfusionMatrix, DetectionReport, EvalError};
use crate::features::{TfidfError, TfidfModel, DEFAULT_MAX_FEATURES};
use crate::windowing::{build_all_windows, temporal_split, Partition, SplitAssignment, SplitError, Window, WindowSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Data(String),
}

/// Everything that determines a trained detector besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSettings {
    pub window: WindowSpec,
    pub max_features: usize,
    pub train: TrainConfig,
    pub objective: ThresholdObjective,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            window: WindowSpec::default(),
            max_features: DEFAULT_MAX_FEATURES,
            train: TrainConfig::default(),
            objective: ThresholdObjective::MaxF1,
        }
    }
}

impl DetectorSettings {
    /// `key=value` pairs for reports.
    pub fn describe(&self) -> Vec<(String, String)> {
        let t = &self.train;
        [
            ("window_k", self.window.k.to_string()),
            ("window_mode", self.window.mode.as_str().to_string()),
            ("label_rule", self.window.label_rule.as_str().to_string()),
            ("max_features", self.max_features.to_string()),
            ("num_trees", t.num_trees.to_string()),
            ("max_leaves", t.max_leaves.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("min_samples_leaf", t.min_samples_leaf.to_string()),
            ("feature_subsample", t.feature_subsample.to_string()),
            ("class_weighting", t.class_weighting.to_string()),
            ("max_bins", t.max_bins.to_string()),
            ("l2_regularization", t.l2_regularization.to_string()),
            ("train_seed", t.seed.to_string()),
            ("threshold_objective", self.objective.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// A trained detector and the validation operating point it was tuned to.
#[derive(Debug, Clone)]
pub struct FittedDetector {
    pub detector: TfidfGbdtDetector,
    pub choice: ThresholdChoice,
}

fn labels(windows: &[&Window]) -> Vec<u8> {
    windows.iter().map(|w| w.label).collect()
}

/// Fits TF-IDF and trees on `train`, then tunes the threshold on `val`.
pub fn fit_detector(train: &[&Window], val: &[&Window], settings: &DetectorSettings) -> Result<FittedDetector, PipelineError> {
    let texts: Vec<&str> = train.iter().map(|w| w.text.as_str()).collect();
    let tfidf = TfidfModel::fit(&texts, settings.max_features)?;
    let x: Vec<_> = texts.iter().map(|t| tfidf.transform(t)).collect();
    drop(texts);
    let model = train_gbdt(&x, &labels(train), &settings.train)?;
    drop(x);
    let xv: Vec<_> = val.iter().map(|w| tfidf.transform(&w.text)).collect();
    let (model, choice) = tune_threshold(model, &xv, &labels(val), settings.objective)?;
    Ok(FittedDetector { detector: TfidfGbdtDetector::new(tfidf, model), choice })
}

/// Scores, labels and metrics of a detector on a window set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub report: DetectionReport,
}

pub fn evaluate(detector: &dyn Detector, windows: &[&Window]) -> Result<Evaluation, PipelineError> {
    if windows.is_empty() {
        return Err(PipelineError::Data("no windows to evaluate".into()));
    }
    let scores: Vec<f64> = windows.iter().map(|w| detector.score(&w.text)).collect();
    let labels = labels(windows);
    let cm = ConfusionMatrix::from_scores(&scores, &labels, detector.threshold());
    let mut report = detection_metrics(&cm);
    report.threshold = Some(detector.threshold());
    report.roc_auc = roc_auc(&scores, &labels).ok();
    Ok(Evaluation { scores, labels, report })
}

/// Windows, split and fitted detector of one temporal-split training run.
pub struct TrainRun {
    pub windows: Vec<Window>,
    pub split: SplitAssignment,
    pub fitted: FittedDetector,
}

impl TrainRun {
    pub fn partition(&self, p: Partition) -> Vec<&Window> {
        self.split.select(&self.windows, p)
    }
}

/// Builds windows, splits them chronologically and fits a detector.
pub fn train_on_corpus(
    corpora: &[GroupCorpus],
    settings: &DetectorSettings,
    fractions: (f64, f64, f64),
) -> Result<TrainRun, PipelineError> {
    let windows = build_all_windows(corpora, &settings.window);
    let split = temporal_split(&windows, fractions)?;
    let train = split.select(&windows, Partition::Train);
    let val = split.select(&windows, Partition::Validation);
    let fitted = fit_detector(&train, &val, settings)?;
    Ok(TrainRun { windows, split, fitted })
}
