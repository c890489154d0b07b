//! Surveillance pipeline for pump-and-dump start announcements in chat group
//! message streams.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: labeled message corpora (loading, statistics, synthetic generation)
//! - [`windowing`]: fixed-size message windows and leakage-free temporal splits
//! - [`features`]: tokenizer and unigram/bigram TF-IDF model
//! - [`detector`]: class-weighted gradient-boosted trees over sparse TF-IDF vectors
//! - [`extraction`]: coin/exchange extraction (lexicon baseline and chat-completion LLM)
//! - [`evaluation`]: metrics, cross-validation and ablation experiments
//! - [`pipeline`]: the train/evaluate glue shared by the CLI and the service

pub mod corpus;
pub mod detector;
pub mod evaluation;
pub mod extraction;
pub mod features;
pub mod pipeline;
pub mod report;
pub mod windowing;

pub use corpus::{GroupCorpus, Message};
pub use detector::{Detector, GbdtModel, TfidfGbdtDetector, TrainConfig};
pub use extraction::{ExtractionMethod, ExtractionResult};
pub use features::{SparseVector, TfidfModel};
pub use windowing::{Partition, SplitAssignment, Window, WindowMode, WindowSpec};

/// Crate version embedded in reports and model metadata.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
