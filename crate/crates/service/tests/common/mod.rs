#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use pumpwatch::corpus::{generate_synthetic, SynthConfig};
use pumpwatch::detector::TrainConfig;
use pumpwatch::pipeline::{train_on_corpus, DetectorSettings};
use pumpwatch::windowing::{LabelRule, DEFAULT_FRACTIONS};
use pumpwatch::{GroupCorpus, Message, WindowMode, WindowSpec};
use pumpwatch_service::PipelineConfig;
use serde_json::Value;

pub const K: usize = 5;

pub fn settings() -> DetectorSettings {
    DetectorSettings {
        window: WindowSpec { label_rule: LabelRule::Center, ..WindowSpec::new(K, WindowMode::Trailing) },
        max_features: 3000,
        train: TrainConfig { num_trees: 40, ..Default::default() },
        ..Default::default()
    }
}

pub fn synth(groups: usize, per_group: usize, prevalence: f64, seed: u64) -> Vec<GroupCorpus> {
    let cfg = SynthConfig { groups, messages_per_group: per_group, prevalence, ..Default::default() };
    generate_synthetic(&cfg, seed).unwrap()
}

/// Directory holding a trailing-window model trained once per test binary.
pub fn model_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let corpora = synth(3, 2000, 0.02, 11);
        let run = train_on_corpus(&corpora, &settings(), DEFAULT_FRACTIONS).unwrap();
        let dir = tempfile::tempdir().unwrap().keep();
        run.fitted.detector.save_dir(&dir).unwrap();
        dir
    })
}

pub fn config(state_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.set("model_dir", model_dir().to_str().unwrap()).unwrap();
    cfg.window_k = K;
    cfg.state_dir = state_dir.to_path_buf();
    cfg.bind = "127.0.0.1:0".into();
    cfg
}

/// Chatter, a countdown and an announcement, ending at the announcement.
pub fn pump_sequence(group: &str, first_id: u64, ts: i64) -> Vec<Message> {
    let texts = [
        "hello guys market looks good today",
        "what do you think about btc coin",
        "thanks for joining, please read the rules",
        "welcome new members, big news soon",
        "15 minutes left until the pump on poloniex! get ready",
        "the coin will be announced in the next message, make sure you are logged in",
        "get ready everyone, 3 minutes left, pump on poloniex",
        "the coin is $GMT on poloniex. buy fast and hold, we are going to the moon",
    ];
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Message::new(group, first_id + i as u64, ts + 60 * i as i64, *t))
        .collect()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn get(url: &str) -> (u16, Value) {
    let mut r = agent().get(url).call().unwrap();
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub fn post(url: &str, body: &Value) -> (u16, Value) {
    post_raw(url, &body.to_string())
}

pub fn post_raw(url: &str, body: &str) -> (u16, Value) {
    let mut r = agent().post(url).header("content-type", "application/json").send(body).unwrap();
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub fn message_json(m: &Message) -> Value {
    serde_json::json!({ "group_id": m.group_id, "msg_id": m.msg_id, "timestamp": m.timestamp, "text": m.text })
}
