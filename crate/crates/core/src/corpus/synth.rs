//! Deterministic synthetic corpora that imitate pump-group traffic.
//!
//! Each group is a stream of background chatter interrupted by pump
//! episodes: a few countdown messages, the start announcement (the only
//! positive message, labeled with coin and exchange) and some status
//! chatter afterwards. Cancelled episodes end in a cancellation notice
//! instead of an announcement.
//!
//! `noise` controls difficulty: with probability `noise` a background
//! message receives pump vocabulary ("will be", "minutes left", ...) and an
//! announcement is replaced by a terse, keyword-free variant.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, GroupCorpus, Message};

pub const DEFAULT_SYNTH_COINS: &[&str] = &[
    "gmt", "poa", "evx", "nebl", "via", "sky", "mth", "ppt", "brd", "nav", "ost", "snm", "qsp", "rdn", "mda",
    "ast", "amb", "bcpt", "gvt", "cdt", "lun", "tnb", "wabi", "oax", "vib", "req", "arn", "dlt", "mod", "storm",
    "gto", "wings", "grs", "pivx", "sys", "blz", "appc", "rcn", "nxs", "agi", "dock", "poly", "data", "key",
    "npxs", "wpr", "qlc", "cnd", "edo", "ins", "hc", "loom", "bcn", "tnt", "fuel", "mco", "dnt", "pnt", "idh",
    "lrc", "rlc", "adx", "elf", "fun", "gas", "ark", "lsk", "sngls", "vet", "cvc", "stmx", "ong", "celr", "fet",
    "ren", "ctxc", "perl", "cos", "mft", "nkn", "dusk", "troy", "vite", "beam", "wrx", "bel", "dia", "pond",
    "sand", "nmr", "rif", "hard", "sun", "front", "auction", "ghst", "mir", "badger", "dego", "ramp", "pols",
    "alpaca", "tvk", "burger", "bake", "mbox", "for", "at", "pump", "oxt", "sfp", "cake", "klay", "quick",
];

pub const DEFAULT_SYNTH_EXCHANGES: &[&str] = &[
    "binance", "poloniex", "kucoin", "hotbit", "yobit", "cryptopia", "bittrex", "mexc", "gate.io", "lbank",
    "xt.com", "hitbtc", "bitmart", "coinex",
];

/// Parameters of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub groups: usize,
    pub messages_per_group: usize,
    /// Probability that a message slot is a pump start announcement.
    pub prevalence: f64,
    /// Difficulty in `[0, 1]`.
    pub noise: f64,
    pub coins: Vec<String>,
    pub exchanges: Vec<String>,
    /// Cancelled episodes per pump episode.
    pub cancel_rate: f64,
    /// Fraction of announcements flagged as carrying an image.
    pub image_rate: f64,
    /// Phrase appended verbatim to every announcement, if set.
    pub marker_phrase: Option<String>,
    /// Timestamp of the first message of every group.
    pub start_ts: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            groups: 10,
            messages_per_group: 2_000,
            prevalence: 0.01,
            noise: 0.0,
            coins: DEFAULT_SYNTH_COINS.iter().map(|s| s.to_string()).collect(),
            exchanges: DEFAULT_SYNTH_EXCHANGES.iter().map(|s| s.to_string()).collect(),
            cancel_rate: 0.06,
            image_rate: 0.1,
            marker_phrase: None,
            // 2019-01-01T00:00:00Z
            start_ts: 1_546_300_800,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CorpusError::InvalidConfig(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("prevalence", self.prevalence)?;
        unit("noise", self.noise)?;
        unit("cancel_rate", self.cancel_rate)?;
        unit("image_rate", self.image_rate)?;
        if self.coins.iter().all(|c| c.trim().is_empty()) {
            return Err(CorpusError::InvalidConfig("coin lexicon is empty".into()));
        }
        if self.exchanges.iter().all(|c| c.trim().is_empty()) {
            return Err(CorpusError::InvalidConfig("exchange lexicon is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Background,
    Countdown { event: usize, step: usize },
    Announcement { event: usize },
    Status { event: usize },
    Cancelled { event: usize },
}

struct Episode {
    coin: String,
    exchange: String,
    obfuscated: bool,
}

const CHAT_WORDS: &[&str] = &[
    "hello", "guys", "today", "market", "looks", "good", "bad", "red", "green", "bullish", "bearish", "hodl",
    "price", "chart", "volume", "wallet", "trade", "trading", "profit", "loss", "signal", "signals", "vip",
    "channel", "group", "members", "thanks", "welcome", "new", "big", "news", "soon", "week", "weekend",
    "night", "morning", "support", "resistance", "breakout", "dip", "buy", "sell", "bitcoin", "btc", "eth",
    "altcoin", "altcoins", "season", "moon", "rocket", "team", "admin", "please", "read", "rules", "join",
    "free", "premium", "call", "calls", "update", "analysis", "long", "short", "stop", "target", "entry",
    "exit", "leverage", "futures", "spot", "deposit", "withdraw", "fees", "listing", "listed", "project",
    "roadmap", "partnership", "airdrop", "giveaway", "winner", "winners", "congrats", "strong", "weak",
    "holders", "whales", "dump", "patience", "trust", "safe", "scam", "careful", "our", "your", "the", "a",
    "is", "are", "was", "and", "or", "to", "of", "in", "on", "with", "this", "that", "we", "you", "it", "be",
];

/// Background word pool: real chat words followed by a fixed set of
/// pseudo-words, so the vocabulary is large but identical for every seed.
fn word_pool() -> Vec<String> {
    const SYL: &[&str] = &[
        "ka", "lo", "mi", "ra", "ten", "vor", "shi", "pa", "du", "zel", "ne", "ro", "fa", "gim", "tu", "be", "sor",
        "lin", "qua", "mex", "ol", "tri", "ven", "ash", "ку", "ni", "dor", "el", "pri", "sto",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_ab);
    let mut pool: Vec<String> = CHAT_WORDS.iter().map(|s| s.to_string()).collect();
    let mut seen: std::collections::HashSet<String> = pool.iter().cloned().collect();
    while pool.len() < 4_000 {
        let n = rng.gen_range(2..=3);
        let w: String = (0..n).map(|_| *SYL.choose(&mut rng).unwrap()).collect();
        if seen.insert(w.clone()) {
            pool.push(w);
        }
    }
    pool
}

const INJECTED_PHRASES: &[&str] = &[
    "will be", "minutes left", "coin", "pump", "exchange", "left", "make sure", "everyone", "we",
];

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    pool: Vec<String>,
    coins: Vec<String>,
    exchanges: Vec<String>,
}

impl Generator<'_> {
    fn zipf_word(&mut self) -> &str {
        let u: f64 = self.rng.gen();
        let idx = ((u * u * u) * self.pool.len() as f64) as usize;
        &self.pool[idx.min(self.pool.len() - 1)]
    }

    fn words(&mut self, lo: usize, hi: usize) -> String {
        let n = self.rng.gen_range(lo..=hi);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.zipf_word().to_string());
        }
        out.join(" ")
    }

    fn coin(&mut self) -> String {
        self.coins.choose(&mut self.rng).unwrap().clone()
    }

    fn exchange(&mut self) -> String {
        self.exchanges.choose(&mut self.rng).unwrap().clone()
    }

    fn url(&mut self) -> String {
        let id: String = (0..10).map(|_| self.rng.sample(rand::distributions::Alphanumeric) as char).collect();
        format!("https://t.me/joinchat/{id}")
    }

    fn background(&mut self) -> String {
        let kind = self.rng.gen_range(0..10);
        let mut text = match kind {
            0..=4 => self.words(4, 18),
            5 => {
                let (c, w, n) = (self.coin().to_uppercase(), self.words(2, 8), self.rng.gen_range(2..60));
                format!("{c} looking {} today, up {n}% {w}", if n % 2 == 0 { "strong" } else { "weak" })
            }
            6 => {
                let (w, u) = (self.words(3, 10), self.url());
                format!("join our vip channel {w} {u}")
            }
            7 => {
                let (c, e, n, w) = (self.coin(), self.exchange(), self.rng.gen_range(30..400), self.words(2, 6));
                format!("our last pump {c} on {e} reached +{n}% profit {w}")
            }
            8 => {
                let w = self.words(3, 9);
                format!("next pump will be announced soon, stay tuned {w}")
            }
            _ => {
                let (c, w) = (self.coin(), self.words(2, 8));
                format!("what do you think about {c} coin {w}")
            }
        };
        if self.rng.gen_bool(self.cfg.noise) {
            let n = self.rng.gen_range(1..=3);
            for _ in 0..n {
                let p = *INJECTED_PHRASES.choose(&mut self.rng).unwrap();
                let w = self.words(0, 3);
                text.push(' ');
                text.push_str(p);
                if !w.is_empty() {
                    text.push(' ');
                    text.push_str(&w);
                }
            }
        }
        text
    }

    fn countdown(&mut self, ep: &Episode, step: usize) -> String {
        let e = &ep.exchange;
        match (step + self.rng.gen_range(0..2)) % 4 {
            0 => format!("{} minutes left until the pump on {e}! get ready", [30, 15, 10, 5][self.rng.gen_range(0..4)]),
            1 => "the coin will be announced in the next message, make sure you are logged in".to_string(),
            2 => format!("{} hours left, make sure your btc is transferred to {e}", self.rng.gen_range(1..6)),
            _ => format!("get ready everyone, {} minutes left, pump on {e}", self.rng.gen_range(1..10)),
        }
    }

    fn announcement(&mut self, ep: &Episode) -> String {
        let up = ep.coin.to_uppercase();
        let e = &ep.exchange;
        let mut text = if ep.obfuscated {
            match self.rng.gen_range(0..3) {
                0 => format!("${up} {e}"),
                1 => format!("{up} / btc go go go"),
                _ => format!("{} ... {up}", self.words(1, 3)),
            }
        } else {
            match self.rng.gen_range(0..3) {
                0 => {
                    let (n, u) = (self.rng.gen_range(100..900), self.url());
                    format!("the coin we are pumping today is ${up}! buy and hold on {e} now, target +{n}% {u}")
                }
                1 => format!("pump starts now! coin name: {up} exchange: {e} buy buy buy and hold"),
                _ => format!("the coin is ${up} on {e}. buy fast and hold, we are going to the moon"),
            }
        };
        if let Some(m) = &self.cfg.marker_phrase {
            text.push(' ');
            text.push_str(m);
        }
        text
    }

    fn status(&mut self, ep: &Episode) -> String {
        let up = ep.coin.to_uppercase();
        match self.rng.gen_range(0..3) {
            0 => format!("pump started! {up} up {}% already", self.rng.gen_range(20..300)),
            1 => format!("amazing volume everyone, hold {up} on {}", ep.exchange),
            _ => format!("congratulations, we reached +{}% peak", self.rng.gen_range(50..500)),
        }
    }

    fn cancellation(&mut self) -> String {
        "the pump is cancelled due to market conditions, we will reschedule".to_string()
    }

    fn group(&mut self, g: usize) -> Vec<Message> {
        let n = self.cfg.messages_per_group;
        let group_id = format!("group-{g:03}");
        let mut roles = vec![Role::Background; n];
        let mut episodes: Vec<Episode> = Vec::new();
        let cancel_p = (self.cfg.prevalence * self.cfg.cancel_rate).clamp(0.0, 1.0);
        let home_exchange = self.exchange();

        for role in roles.iter_mut() {
            if self.rng.gen_bool(self.cfg.prevalence) {
                *role = Role::Announcement { event: episodes.len() };
            } else if self.rng.gen_bool(cancel_p) {
                *role = Role::Cancelled { event: episodes.len() };
            } else {
                continue;
            }
            let exchange = if self.rng.gen_bool(0.7) { home_exchange.clone() } else { self.exchange() };
            let coin = self.coin();
            let obfuscated = self.rng.gen_bool(self.cfg.noise);
            episodes.push(Episode { coin, exchange, obfuscated });
        }

        // Countdowns before and status chatter after each episode, only over
        // background slots.
        for p in 0..n {
            let (event, cancelled) = match roles[p] {
                Role::Announcement { event } => (event, false),
                Role::Cancelled { event } => (event, true),
                _ => continue,
            };
            let before = self.rng.gen_range(2..=4);
            for d in 1..=before {
                if p >= d && roles[p - d] == Role::Background {
                    roles[p - d] = Role::Countdown { event, step: before - d };
                }
            }
            if !cancelled {
                let after = self.rng.gen_range(1..=3);
                for d in 1..=after {
                    if p + d < n && roles[p + d] == Role::Background {
                        roles[p + d] = Role::Status { event };
                    }
                }
            }
        }

        let mut ts = self.cfg.start_ts + self.rng.gen_range(0..3_600);
        let mut out = Vec::with_capacity(n);
        for (i, role) in roles.iter().enumerate() {
            let gap = match role {
                Role::Countdown { .. } | Role::Announcement { .. } | Role::Status { .. } => self.rng.gen_range(30..600),
                _ => self.rng.gen_range(60..7_200),
            };
            ts += gap;
            let msg_id = i as u64 + 1;
            let msg = match *role {
                Role::Background => Message::new(&group_id, msg_id, ts, self.background()),
                Role::Countdown { event, step } => {
                    let text = self.countdown(&episodes[event], step);
                    Message::new(&group_id, msg_id, ts, text)
                }
                Role::Announcement { event } => {
                    let text = self.announcement(&episodes[event]);
                    let ep = &episodes[event];
                    let mut m = Message::new(&group_id, msg_id, ts, text).with_pump(Some(&ep.coin), Some(&ep.exchange));
                    m.has_image = self.rng.gen_bool(self.cfg.image_rate);
                    m
                }
                Role::Status { event } => {
                    let text = self.status(&episodes[event]);
                    Message::new(&group_id, msg_id, ts, text)
                }
                Role::Cancelled { .. } => {
                    let mut m = Message::new(&group_id, msg_id, ts, self.cancellation());
                    m.cancelled = true;
                    m
                }
            };
            out.push(msg);
        }
        out
    }
}

/// Generates `config.groups` corpora; identical `(config, seed)` yields
/// identical output.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Vec<GroupCorpus>, CorpusError> {
    config.validate()?;
    let clean = |v: &[String]| -> Vec<String> {
        v.iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect()
    };
    let mut gen = Generator {
        cfg: config,
        rng: ChaCha8Rng::seed_from_u64(seed),
        pool: word_pool(),
        coins: clean(&config.coins),
        exchanges: clean(&config.exchanges),
    };
    (0..config.groups)
        .map(|g| {
            let msgs = gen.group(g);
            GroupCorpus::from_messages(format!("group-{g:03}"), msgs)
        })
        .collect()
}
