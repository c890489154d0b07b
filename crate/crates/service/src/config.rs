//! `key=value` service configuration with `PUMPWATCH_*` environment
//! overrides.
//!
//! ```text
//! # comments and blank lines are ignored
//! model_dir=out/model
//! extraction_mode=rule_based
//! review_sampling_rate=0.2
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use pumpwatch::detector::{DetectorError, TfidfGbdtDetector, GBDT_FILE, TFIDF_FILE};
use pumpwatch::extraction::{LlmConfig, TOKEN_ENV};
use pumpwatch::windowing::{LabelRule, DEFAULT_K};
use thiserror::Error;

pub const ENV_PREFIX: &str = "PUMPWATCH_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("model file {0} does not exist")]
    MissingModel(PathBuf),
    #[error("cannot load model: {0}")]
    Model(#[from] DetectorError),
    #[error("model version {found} does not match configured {expected}")]
    VersionMismatch { expected: String, found: String },
    #[error("model threshold was never tuned; run `pumpwatch train` with a validation split")]
    UntunedThreshold,
}

/// Which extractor runs on flagged windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionMode {
    RuleBased,
    Llm,
    /// LLM result is primary; the rule-based result is kept alongside.
    Both,
}

impl ExtractionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionMode::RuleBased => "rule_based",
            ExtractionMode::Llm => "llm",
            ExtractionMode::Both => "both",
        }
    }
}

impl fmt::Display for ExtractionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rule_based" | "rule" => Ok(ExtractionMode::RuleBased),
            "llm" => Ok(ExtractionMode::Llm),
            "both" => Ok(ExtractionMode::Both),
            _ => Err(format!("expected rule_based|llm|both, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tfidf_path: PathBuf,
    pub gbdt_path: PathBuf,
    /// Expected detector version; checked at startup when set.
    pub model_version: Option<String>,
    pub window_k: usize,
    pub label_rule: LabelRule,
    pub extraction_mode: ExtractionMode,
    pub llm_base_url: String,
    pub llm_model: String,
    pub llm_token: Option<String>,
    pub llm_timeout: Duration,
    pub llm_max_retries: u32,
    pub tickers_path: Option<PathBuf>,
    pub exchanges_path: Option<PathBuf>,
    pub prompt_path: Option<PathBuf>,
    pub review_sampling_rate: f64,
    pub state_dir: PathBuf,
    pub bind: String,
    pub seed: u64,
    /// Messages after an alert during which the same group cannot alert
    /// again. 0 disables the cooldown.
    pub alert_cooldown: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tfidf_path: PathBuf::from("model").join(TFIDF_FILE),
            gbdt_path: PathBuf::from("model").join(GBDT_FILE),
            model_version: None,
            window_k: DEFAULT_K,
            label_rule: LabelRule::Contains,
            extraction_mode: ExtractionMode::RuleBased,
            llm_base_url: "http://127.0.0.1:8000/v1".into(),
            llm_model: "gpt-4o-mini".into(),
            llm_token: None,
            llm_timeout: Duration::from_secs(30),
            llm_max_retries: 2,
            tickers_path: None,
            exchanges_path: None,
            prompt_path: None,
            review_sampling_rate: 1.0,
            state_dir: PathBuf::from("state"),
            bind: "127.0.0.1:8080".into(),
            seed: 0,
            alert_cooldown: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), reason: e.to_string() })
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl PipelineConfig {
    /// Every accepted key, in file order.
    pub const KEYS: &'static [&'static str] = &[
        "model_dir",
        "tfidf_path",
        "gbdt_path",
        "model_version",
        "window_k",
        "label_rule",
        "extraction_mode",
        "llm_base_url",
        "llm_model",
        "llm_token",
        "llm_timeout_secs",
        "llm_max_retries",
        "tickers_path",
        "exchanges_path",
        "prompt_path",
        "review_sampling_rate",
        "state_dir",
        "bind",
        "seed",
        "alert_cooldown",
    ];

    /// Sets one key. `model_dir` sets both model paths.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "model_dir" => {
                self.tfidf_path = Path::new(v).join(TFIDF_FILE);
                self.gbdt_path = Path::new(v).join(GBDT_FILE);
            }
            "tfidf_path" => self.tfidf_path = PathBuf::from(v),
            "gbdt_path" => self.gbdt_path = PathBuf::from(v),
            "model_version" => self.model_version = (!v.is_empty()).then(|| v.to_string()),
            "window_k" => self.window_k = parse(key, v)?,
            "label_rule" => self.label_rule = parse(key, v)?,
            "extraction_mode" => self.extraction_mode = parse(key, v)?,
            "llm_base_url" => self.llm_base_url = v.to_string(),
            "llm_model" => self.llm_model = v.to_string(),
            "llm_token" => self.llm_token = (!v.is_empty()).then(|| v.to_string()),
            "llm_timeout_secs" => self.llm_timeout = Duration::from_secs_f64(parse::<f64>(key, v)?.max(0.0)),
            "llm_max_retries" => self.llm_max_retries = parse(key, v)?,
            "tickers_path" => self.tickers_path = optional_path(v),
            "exchanges_path" => self.exchanges_path = optional_path(v),
            "prompt_path" => self.prompt_path = optional_path(v),
            "review_sampling_rate" => self.review_sampling_rate = parse(key, v)?,
            "state_dir" => self.state_dir = PathBuf::from(v),
            "bind" => self.bind = v.to_string(),
            "seed" => self.seed = parse(key, v)?,
            "alert_cooldown" => self.alert_cooldown = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, reason: format!("expected key=value, got `{line}`") })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Applies `PUMPWATCH_<KEY>` variables. Unrelated variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = vars.into_iter().collect();
        vars.sort();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = rest.to_ascii_lowercase();
            if Self::KEYS.contains(&key.as_str()) {
                self.set(&key, &value)?;
            }
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| Err(ConfigError::BadValue { key: key.into(), reason: reason.into() });
        if self.window_k == 0 {
            return bad("window_k", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.review_sampling_rate) {
            return bad("review_sampling_rate", "must be in [0, 1]");
        }
        Ok(())
    }

    pub fn llm_config(&self) -> LlmConfig {
        let cfg = LlmConfig {
            base_url: self.llm_base_url.clone(),
            model: self.llm_model.clone(),
            token: self.llm_token.clone(),
            timeout: self.llm_timeout,
        };
        // The token variable doubles as the `llm_token` override.
        if cfg.token.is_none() && std::env::var(TOKEN_ENV).is_ok() {
            cfg.with_env_token()
        } else {
            cfg
        }
    }

    /// Loads the detector and checks it against the configured version.
    pub fn load_detector(&self) -> Result<TfidfGbdtDetector, ConfigError> {
        for p in [&self.tfidf_path, &self.gbdt_path] {
            if !p.exists() {
                return Err(ConfigError::MissingModel(p.clone()));
            }
        }
        let tfidf = pumpwatch::features::TfidfModel::load(&self.tfidf_path).map_err(DetectorError::from)?;
        let model = pumpwatch::detector::GbdtModel::load(&self.gbdt_path)?;
        if model.feature_count != tfidf.len() {
            return Err(ConfigError::Model(DetectorError::Format(format!(
                "model expects {} features, vectorizer has {}",
                model.feature_count,
                tfidf.len()
            ))));
        }
        if !model.threshold_tuned() {
            return Err(ConfigError::UntunedThreshold);
        }
        let det = TfidfGbdtDetector::new(tfidf, model);
        if let Some(expected) = &self.model_version {
            let found = pumpwatch::detector::Detector::version(&det);
            if found != expected {
                return Err(ConfigError::VersionMismatch { expected: expected.clone(), found: found.to_string() });
            }
        }
        Ok(det)
    }

    /// `key=value` text that [`PipelineConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let rows = [
            ("tfidf_path", self.tfidf_path.display().to_string()),
            ("gbdt_path", self.gbdt_path.display().to_string()),
            ("model_version", self.model_version.clone().unwrap_or_default()),
            ("window_k", self.window_k.to_string()),
            ("label_rule", self.label_rule.as_str().to_string()),
            ("extraction_mode", self.extraction_mode.to_string()),
            ("llm_base_url", self.llm_base_url.clone()),
            ("llm_model", self.llm_model.clone()),
            ("llm_timeout_secs", self.llm_timeout.as_secs_f64().to_string()),
            ("llm_max_retries", self.llm_max_retries.to_string()),
            ("tickers_path", opt(&self.tickers_path)),
            ("exchanges_path", opt(&self.exchanges_path)),
            ("prompt_path", opt(&self.prompt_path)),
            ("review_sampling_rate", self.review_sampling_rate.to_string()),
            ("state_dir", self.state_dir.display().to_string()),
            ("bind", self.bind.clone()),
            ("seed", self.seed.to_string()),
            ("alert_cooldown", self.alert_cooldown.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
