//! Detection and extraction metrics, phrase analysis and experiment drivers.

mod experiments;
mod extraction;
mod metrics;
mod phrases;

use thiserror::Error;

pub use experiments::{
    ablation_tsv, best_f1_for_size, run_ablation, run_crossval, AblationCell, AblationConfig, CvConfig, CvReport, CvRun,
};
pub use extraction::{extraction_accuracy, ExtractionReport};
pub use metrics::{detection_metrics, event_delay, roc_auc, ConfusionMatrix, DelayReport, DetectionReport};
pub use phrases::{message_populations, phrase_stats, phrase_stats_tsv, window_populations, PhraseStat, DEFAULT_PHRASES};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both classes are required")]
    SingleClass,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("time block {block} has no positive windows")]
    TooFewPositives { block: usize },
    #[error("{0}")]
    Invalid(String),
}
