use std::collections::{BTreeMap, BTreeSet};

use super::GroupCorpus;

/// Summary statistics over a set of group corpora.
///
/// Averages are `None` when the underlying population is empty. Hour and
/// weekday histograms are in UTC; weekday 0 is Monday.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub total_messages: usize,
    pub pump_count: usize,
    pub cancelled_count: usize,
    pub unique_coins: usize,
    pub unique_exchanges: usize,
    pub image_pump_count: usize,
    pub avg_msg_len_chars: Option<f64>,
    pub avg_pump_msg_len_chars: Option<f64>,
    pub per_group_pump_counts: BTreeMap<String, usize>,
    pub pump_hour_histogram: [usize; 24],
    pub pump_weekday_histogram: [usize; 7],
}

pub fn corpus_stats(corpora: &[GroupCorpus]) -> CorpusStats {
    let mut total = 0usize;
    let mut pumps = 0usize;
    let mut cancelled = 0usize;
    let mut images = 0usize;
    let mut len_sum = 0u64;
    let mut pump_len_sum = 0u64;
    let mut coins = BTreeSet::new();
    let mut exchanges = BTreeSet::new();
    let mut per_group = BTreeMap::new();
    let mut hours = [0usize; 24];
    let mut weekdays = [0usize; 7];

    for g in corpora {
        let mut group_pumps = 0;
        for m in &g.messages {
            total += 1;
            let chars = m.text.chars().count() as u64;
            len_sum += chars;
            if m.cancelled {
                cancelled += 1;
            }
            if !m.is_pump_start {
                continue;
            }
            pumps += 1;
            group_pumps += 1;
            pump_len_sum += chars;
            if m.has_image {
                images += 1;
            }
            if let Some(c) = &m.coin {
                coins.insert(c.as_str());
            }
            if let Some(e) = &m.exchange {
                exchanges.insert(e.as_str());
            }
            let secs = m.timestamp.rem_euclid(86_400);
            hours[(secs / 3600) as usize] += 1;
            // 1970-01-01 was a Thursday.
            let day = m.timestamp.div_euclid(86_400);
            weekdays[(day + 3).rem_euclid(7) as usize] += 1;
        }
        *per_group.entry(g.group_id.clone()).or_insert(0) += group_pumps;
    }

    CorpusStats {
        total_messages: total,
        pump_count: pumps,
        cancelled_count: cancelled,
        unique_coins: coins.len(),
        unique_exchanges: exchanges.len(),
        image_pump_count: images,
        avg_msg_len_chars: (total > 0).then(|| len_sum as f64 / total as f64),
        avg_pump_msg_len_chars: (pumps > 0).then(|| pump_len_sum as f64 / pumps as f64),
        per_group_pump_counts: per_group,
        pump_hour_histogram: hours,
        pump_weekday_histogram: weekdays,
    }
}

impl CorpusStats {
    /// Tab-separated `statistic\tvalue` rows.
    pub fn to_tsv(&self) -> String {
        let fmt_avg = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut s = String::from("statistic\tvalue\n");
        s += &format!("total_messages\t{}\n", self.total_messages);
        s += &format!("pump_count\t{}\n", self.pump_count);
        s += &format!("cancelled_count\t{}\n", self.cancelled_count);
        s += &format!("unique_coins\t{}\n", self.unique_coins);
        s += &format!("unique_exchanges\t{}\n", self.unique_exchanges);
        s += &format!("image_pump_count\t{}\n", self.image_pump_count);
        s += &format!("avg_msg_len_chars\t{}\n", fmt_avg(self.avg_msg_len_chars));
        s += &format!("avg_pump_msg_len_chars\t{}\n", fmt_avg(self.avg_pump_msg_len_chars));
        s += &format!("groups\t{}\n", self.per_group_pump_counts.len());
        let hours: Vec<String> = self.pump_hour_histogram.iter().map(|c| c.to_string()).collect();
        s += &format!("pump_hour_histogram_utc\t{}\n", hours.join(","));
        let days: Vec<String> = self.pump_weekday_histogram.iter().map(|c| c.to_string()).collect();
        s += &format!("pump_weekday_histogram_mon_first\t{}\n", days.join(","));
        s
    }
}
