//! Online side of pumpwatch: per-group streaming cascade, alert store with
//! analyst review, chronological replay, and the HTTP API.

pub mod alert;
pub mod cascade;
pub mod config;
pub mod mock_llm;
pub mod replay;
pub mod server;
pub mod store;

pub use alert::{AlertEvent, AlertStatus, Decision, Review};
pub use cascade::{Cascade, Extractor, GroupStream, Processed, StreamError};
pub use config::{ConfigError, ExtractionMode, PipelineConfig};
pub use replay::{offline_mismatches, replay, ReplayReport, ReplaySpeed};
pub use server::{router, serve, AppState, ServeError};
pub use store::{AlertStore, LabelRecord, StoreError};
