use super::EvalError;
use crate::corpus::GroupCorpus;
use crate::windowing::Window;

/// Phrases whose pump/background contrast is tracked by default.
pub const DEFAULT_PHRASES: &[&str] = &["will be", "exchange", "left", "coin", "pump", "minutes left"];

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseStat {
    pub phrase: String,
    /// Percent of pump texts containing the phrase.
    pub pump_pct: f64,
    pub background_pct: f64,
    /// `pump_pct - background_pct`, in percentage points.
    pub difference: f64,
}

fn pct_containing(texts: &[String], phrase: &str) -> f64 {
    let hits = texts.iter().filter(|t| t.contains(phrase)).count();
    100.0 * hits as f64 / texts.len() as f64
}

/// Case-insensitive substring rates over two text populations, sorted by
/// difference (descending), then phrase.
pub fn phrase_stats<S: AsRef<str>, P: AsRef<str>>(
    pump: &[S],
    background: &[S],
    phrases: &[P],
) -> Result<Vec<PhraseStat>, EvalError> {
    if phrases.is_empty() {
        return Err(EvalError::Empty("phrase list"));
    }
    if pump.is_empty() || background.is_empty() {
        return Err(EvalError::Empty("pump or background population"));
    }
    let lower = |v: &[S]| v.iter().map(|s| s.as_ref().to_lowercase()).collect::<Vec<_>>();
    let (pump, background) = (lower(pump), lower(background));
    let mut out: Vec<PhraseStat> = phrases
        .iter()
        .map(|p| {
            let phrase = p.as_ref().to_lowercase();
            let pump_pct = pct_containing(&pump, &phrase);
            let background_pct = pct_containing(&background, &phrase);
            PhraseStat { phrase, pump_pct, background_pct, difference: pump_pct - background_pct }
        })
        .collect();
    out.sort_by(|a, b| b.difference.total_cmp(&a.difference).then_with(|| a.phrase.cmp(&b.phrase)));
    Ok(out)
}

/// Positive and negative window texts.
pub fn window_populations(windows: &[Window]) -> (Vec<&str>, Vec<&str>) {
    let mut pump = Vec::new();
    let mut bg = Vec::new();
    for w in windows {
        if w.label == 1 { pump.push(w.text.as_str()) } else { bg.push(w.text.as_str()) }
    }
    (pump, bg)
}

/// Pump-start message texts and all other message texts.
pub fn message_populations(corpora: &[GroupCorpus]) -> (Vec<&str>, Vec<&str>) {
    let mut pump = Vec::new();
    let mut bg = Vec::new();
    for g in corpora {
        for m in &g.messages {
            if m.is_pump_start { pump.push(m.text.as_str()) } else { bg.push(m.text.as_str()) }
        }
    }
    (pump, bg)
}

pub fn phrase_stats_tsv(stats: &[PhraseStat]) -> String {
    let mut s = String::from("phrase\tpump_pct\tbackground_pct\tdifference\n");
    for p in stats {
        s += &format!("{}\t{:.2}\t{:.2}\t{:+.2}\n", p.phrase, p.pump_pct, p.background_pct, p.difference);
    }
    s
}
